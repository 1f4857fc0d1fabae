#pragma once

// Client contracts for the model services used by annotation, simulation and metrics:
// chat completion, text embedding, and token-level continuation scoring.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace simeval {

struct DecodingParams {
    bool greedy = true;
    double temperature = 1.0;  // ignored when greedy
    int max_tokens = 400;
    std::optional<std::string> reasoning_effort;  // passed through opaquely
    std::uint64_t seed = 0;                       // sampling seed (mock backends / providers that honor it)
};

struct ChatMessage {
    std::string role;  // "user" | "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model;
    std::string system_prompt;
    std::vector<ChatMessage> messages;
    DecodingParams decoding;

    std::size_t prompt_chars() const;
};

struct ChatResponse {
    std::string text;
    std::string finish_reason;
};

/// Canonical serialization used for hashing and caching (temperature omitted when greedy).
std::string canonical_request(const ChatRequest& req);
std::string sha256_hex(const std::string& data);

struct EmbeddingVector {
    std::vector<double> values;
    std::string model;
    std::string text_hash;

    double norm() const;
};

struct ContinuationScore {
    std::vector<double> token_logprobs;  // one per continuation token, each finite and <= 0
    std::size_t token_count() const { return token_logprobs.size(); }
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
};

// ---------------------------------------------------------------------------
// Raw backend interfaces. Implementations: OpenAI-compatible HTTP and in-process mocks.

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& req) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string model() const = 0;
    virtual std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) = 0;
};

class ScoringBackend {
public:
    virtual ~ScoringBackend() = default;
    /// Logprobs of the continuation's tokens given the context.
    virtual std::vector<double> continuation_logprobs(const std::string& context,
                                                      const std::string& continuation) = 0;
    /// Top alternatives for the first generated token of the chat request.
    virtual std::vector<TokenLogprob> first_token_logprobs(const ChatRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Transport, retries, limits, caching.

struct HttpResult {
    int status = 0;  // 0 = connection failure
    std::string body;
    std::string error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResult post_json(const std::string& path, const std::string& body,
                                 const std::map<std::string, std::string>& headers) = 0;
};

/// cpp-httplib based transport for base URLs like "https://host/v1".
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout);

struct RetryPolicy {
    int max_retries = 5;
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds max_delay{30000};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

/// Sends a JSON POST with exponential backoff on transient failures (connection errors, 408,
/// 409, 429, 5xx). 401/403 raise AuthError; a context-length rejection raises ContextLengthError;
/// exhausting retries raises BackendError naming the request hash.
std::string post_with_retry(HttpTransport& transport, const std::string& path, const std::string& body,
                            const std::map<std::string, std::string>& headers, const RetryPolicy& policy,
                            const Sleeper& sleep);

/// Caps in-flight requests and request rate; shared between clients of one endpoint.
class RequestLimiter {
public:
    RequestLimiter(int max_in_flight, double requests_per_second);

    class Permit {
    public:
        explicit Permit(RequestLimiter* owner) : owner_(owner) {}
        Permit(Permit&& o) noexcept : owner_(std::exchange(o.owner_, nullptr)) {}
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;
        ~Permit();

    private:
        RequestLimiter* owner_;
    };

    Permit acquire();
    int in_flight() const;

private:
    void release();

    mutable std::mutex mu_;
    std::condition_variable cv_;
    int max_in_flight_;
    int in_flight_ = 0;
    std::chrono::steady_clock::duration interval_{};
    std::chrono::steady_clock::time_point next_slot_{};
};

/// Persistent response cache keyed by SHA-256 of a canonical request; values stored verbatim.
class DiskCache {
public:
    explicit DiskCache(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& value);
    const std::filesystem::path& dir() const { return dir_; }
    std::size_t hits() const;
    std::size_t misses() const;

private:
    std::filesystem::path file_for(const std::string& key) const;

    std::filesystem::path dir_;
    mutable std::mutex write_mu_;
    mutable std::mutex stats_mu_;
    mutable std::size_t hits_ = 0;
    mutable std::size_t misses_ = 0;
};

// ---------------------------------------------------------------------------
// Contract-enforcing clients used by the rest of the library.

class ChatClient {
public:
    struct Options {
        std::string model;
        std::size_t char_cap = 0;  // 0 = no cap
        std::shared_ptr<DiskCache> cache;
        std::shared_ptr<RequestLimiter> limiter;
    };

    ChatClient(std::shared_ptr<ChatBackend> backend, Options opts);

    /// Fills in the model name when empty, enforces the character cap locally, consults the cache.
    ChatResponse chat_complete(ChatRequest req);
    std::size_t backend_calls() const;
    const std::string& model() const { return opts_.model; }

private:
    std::shared_ptr<ChatBackend> backend_;
    Options opts_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
};

class Embedder {
public:
    Embedder(std::shared_ptr<EmbeddingBackend> backend, std::shared_ptr<DiskCache> cache = nullptr,
             std::shared_ptr<RequestLimiter> limiter = nullptr);

    /// One vector per input, order preserved; results cached by (model, text). Throws
    /// PreconditionError on empty input/text and BackendError on dimension mismatch or zero norm.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts);
    EmbeddingVector embed_one(const std::string& text);

    std::size_t backend_calls() const;  // texts actually sent to the backend
    std::optional<std::size_t> dimension() const;

private:
    std::shared_ptr<EmbeddingBackend> backend_;
    std::shared_ptr<DiskCache> disk_;
    std::shared_ptr<RequestLimiter> limiter_;
    mutable std::mutex mu_;
    std::map<std::string, std::vector<double>> memo_;
    std::optional<std::size_t> dim_;
    std::size_t calls_ = 0;
};

class Scorer {
public:
    Scorer(std::shared_ptr<ScoringBackend> backend, std::string model,
           std::shared_ptr<DiskCache> cache = nullptr, std::shared_ptr<RequestLimiter> limiter = nullptr);

    /// Throws PreconditionError("empty continuation") and BackendError on invalid logprobs.
    ContinuationScore score_continuation(const std::string& context, const std::string& continuation);

    /// p = exp(lp+)/(exp(lp+)+exp(lp-)) over the first generated token. A label token missing from
    /// the returned alternatives takes the lowest returned logprob; if both are missing, throws
    /// BackendError("label tokens unranked").
    double binary_token_probability(const ChatRequest& prompt, const std::string& positive,
                                    const std::string& negative);

    std::size_t backend_calls() const;

private:
    std::shared_ptr<ScoringBackend> backend_;
    std::string model_;
    std::shared_ptr<DiskCache> cache_;
    std::shared_ptr<RequestLimiter> limiter_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
};

/// Two-way softmax of logprobs; binary_probability(a, b) + binary_probability(b, a) == 1.
double binary_probability(double lp_positive, double lp_negative);

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP backends.

struct HttpEndpoint {
    std::string base_url;
    std::string model;
    std::string api_key;  // resolved from the environment, may be empty for local servers
    RetryPolicy retry;
    std::chrono::seconds timeout{120};
};

std::shared_ptr<ChatBackend> make_openai_chat(const HttpEndpoint& ep,
                                              std::shared_ptr<HttpTransport> transport = nullptr,
                                              Sleeper sleep = nullptr);
std::shared_ptr<EmbeddingBackend> make_openai_embedding(const HttpEndpoint& ep,
                                                        std::shared_ptr<HttpTransport> transport = nullptr,
                                                        Sleeper sleep = nullptr);
std::shared_ptr<ScoringBackend> make_openai_scoring(const HttpEndpoint& ep,
                                                    std::shared_ptr<HttpTransport> transport = nullptr,
                                                    Sleeper sleep = nullptr);

// ---------------------------------------------------------------------------
// Configuration.

enum class Capability { chat, embed, score };

struct BackendConfig {
    std::string name;
    std::string base_url;  // "mock:<kind>" selects an in-process mock
    std::string model;
    std::string api_key_env;
    std::set<Capability> capabilities;
    std::size_t char_cap = 0;
    int max_in_flight = 4;
    double requests_per_second = 0.0;  // 0 = unlimited
    RetryPolicy retry;

    bool is_mock() const;
    bool has(Capability c) const { return capabilities.contains(c); }
};

enum class Role { annotate, judge, student, embed, kt, tutor };
std::string_view to_string(Role r);

struct BackendsConfig {
    std::vector<BackendConfig> backends;
    std::map<Role, std::string> roles;
    std::filesystem::path cache_dir;  // empty = no disk cache
};

/// Parses a backends file (TOML, or JSON when the extension is .json). `${VAR}` references in
/// string values are expanded from the environment. Throws ParseError / IoError.
BackendsConfig load_backends_config(const std::filesystem::path& path);
BackendsConfig backends_config_from_json(const std::string& json_text);

/// Builds clients per role; validates capabilities at construction (CapabilityError).
class BackendRegistry {
public:
    explicit BackendRegistry(BackendsConfig cfg);

    std::shared_ptr<ChatClient> chat(Role role);
    std::shared_ptr<Embedder> embedder(Role role = Role::embed);
    std::shared_ptr<Scorer> scorer(Role role);
    const BackendConfig& config_for(Role role) const;
    bool has_role(Role role) const;

private:
    const BackendConfig& require(Role role, Capability cap) const;
    std::shared_ptr<RequestLimiter> limiter_for(const BackendConfig& c);

    BackendsConfig cfg_;
    std::shared_ptr<DiskCache> cache_;
    std::map<std::string, std::shared_ptr<RequestLimiter>> limiters_;
    std::map<std::string, std::shared_ptr<ChatClient>> chats_;
    std::map<std::string, std::shared_ptr<Embedder>> embedders_;
    std::map<std::string, std::shared_ptr<Scorer>> scorers_;
};

}  // namespace simeval
