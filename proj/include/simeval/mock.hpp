#pragma once

// Deterministic in-process backends for tests, golden runs and offline development.

#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "simeval/backends.hpp"

namespace simeval {

/// Chat backend answering through a user-supplied handler.
class MockChatBackend : public ChatBackend {
public:
    using Handler = std::function<std::string(const ChatRequest&)>;
    explicit MockChatBackend(Handler h) : handler_(std::move(h)) {}
    ChatResponse complete(const ChatRequest& req) override;

private:
    Handler handler_;
};

/// Echoes the system prompt.
std::shared_ptr<ChatBackend> make_echo_chat();

/// Recognizes every built-in prompt template (annotation, judge, student, KT) and answers with
/// well-formed, deterministic output derived from the request content and sampling seed.
std::shared_ptr<ChatBackend> make_heuristic_chat();

/// Hashed bag-of-tokens + character-trigram features, L2-normalized. Identical texts map to
/// identical vectors.
class HashEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HashEmbeddingBackend(std::size_t dim = 64, std::string model = "mock-hash-embed")
        : dim_(dim), model_(std::move(model)) {}
    std::string model() const override { return model_; }
    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override;

private:
    std::size_t dim_;
    std::string model_;
};

/// Scoring backend with pluggable rules. Tokens are whitespace-separated words.
class MockScoringBackend : public ScoringBackend {
public:
    using TokenRule = std::function<double(const std::string& context, const std::string& token,
                                           std::size_t position)>;  // returns probability
    using FirstTokenRule = std::function<std::vector<TokenLogprob>(const ChatRequest&)>;

    MockScoringBackend(TokenRule token_rule, FirstTokenRule first_rule)
        : token_rule_(std::move(token_rule)), first_rule_(std::move(first_rule)) {}

    std::vector<double> continuation_logprobs(const std::string& context,
                                              const std::string& continuation) override;
    std::vector<TokenLogprob> first_token_logprobs(const ChatRequest& req) override;

private:
    TokenRule token_rule_;
    FirstTokenRule first_rule_;
};

/// Every token has probability p; "True" and "False" are equally likely.
std::shared_ptr<ScoringBackend> make_uniform_scoring(double p);

/// Deterministic pseudo-random probabilities derived from hashes of the inputs.
std::shared_ptr<ScoringBackend> make_heuristic_scoring();

/// Builds a mock backend from a "mock:<kind>[?p=<prob>]" URL for the given capability.
std::shared_ptr<ChatBackend> make_mock_chat(std::string_view url);
std::shared_ptr<EmbeddingBackend> make_mock_embedding(std::string_view url, const std::string& model);
std::shared_ptr<ScoringBackend> make_mock_scoring(std::string_view url);

/// Stable 64-bit FNV-1a hash, used wherever mocks need platform-independent determinism.
std::uint64_t stable_hash(std::string_view s);

}  // namespace simeval
