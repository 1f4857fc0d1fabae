#include "simeval/backends.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include <json.hpp>

#include "simeval/core.hpp"
#include "simeval/error.hpp"
#include "simeval/mock.hpp"

namespace simeval {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Requests and hashing

std::size_t ChatRequest::prompt_chars() const {
    std::size_t n = system_prompt.size();
    for (const auto& m : messages) n += m.content.size();
    return n;
}

std::string canonical_request(const ChatRequest& req) {
    json msgs = json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    json j{{"model", req.model},
           {"system", req.system_prompt},
           {"messages", std::move(msgs)},
           {"greedy", req.decoding.greedy},
           {"max_tokens", req.decoding.max_tokens}};
    if (!req.decoding.greedy) {
        j["temperature"] = req.decoding.temperature;
        j["seed"] = req.decoding.seed;
    }
    if (req.decoding.reasoning_effort) j["reasoning_effort"] = *req.decoding.reasoning_effort;
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

double EmbeddingVector::norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

double binary_probability(double lp_positive, double lp_negative) {
    // Evaluate the smaller probability directly and the larger as its complement, so that
    // swapping the arguments yields exactly 1 - p.
    const double d = lp_negative - lp_positive;
    if (d > 0.0) return 1.0 / (1.0 + std::exp(d));
    return 1.0 - 1.0 / (1.0 + std::exp(-d));
}

// ---------------------------------------------------------------------------
// Retry

Sleeper real_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string post_with_retry(HttpTransport& transport, const std::string& path, const std::string& body,
                            const std::map<std::string, std::string>& headers, const RetryPolicy& policy,
                            const Sleeper& sleep) {
    const std::string hash = sha256_hex(path + "\n" + body).substr(0, 16);
    std::string last_error;
    for (int attempt = 0;; ++attempt) {
        HttpResult r = transport.post_json(path, body, headers);
        if (r.status >= 200 && r.status < 300) return r.body;
        if (r.status == 401 || r.status == 403)
            throw AuthError("authentication failed (HTTP " + std::to_string(r.status) + ") for request " + hash);
        if (r.status == 400 || r.status == 413) {
            if (r.body.find("context_length") != std::string::npos ||
                r.body.find("maximum context") != std::string::npos || r.status == 413)
                throw ContextLengthError("request " + hash + " exceeds the model context: " + r.body);
            throw BackendError("request " + hash + " rejected (HTTP 400): " + r.body);
        }
        const bool transient = r.status == 0 || r.status == 408 || r.status == 409 || r.status == 429 ||
                               r.status >= 500;
        last_error = r.status == 0 ? r.error : "HTTP " + std::to_string(r.status) + ": " + r.body;
        if (!transient) throw BackendError("request " + hash + " failed: " + last_error);
        if (attempt >= policy.max_retries)
            throw BackendError("request " + hash + " failed after " + std::to_string(attempt + 1) +
                               " attempts: " + last_error);
        auto delay = policy.base_delay * (1LL << std::min(attempt, 30));
        sleep(std::min<std::chrono::milliseconds>(delay, policy.max_delay));
    }
}

// ---------------------------------------------------------------------------
// Limiter

RequestLimiter::RequestLimiter(int max_in_flight, double requests_per_second)
    : max_in_flight_(std::max(1, max_in_flight)) {
    if (requests_per_second > 0.0)
        interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / requests_per_second));
}

RequestLimiter::Permit RequestLimiter::acquire() {
    std::chrono::steady_clock::time_point slot;
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
        ++in_flight_;
        auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
    return Permit(this);
}

void RequestLimiter::release() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

int RequestLimiter::in_flight() const {
    std::lock_guard lock(mu_);
    return in_flight_;
}

RequestLimiter::Permit::~Permit() {
    if (owner_) owner_->release();
}

// ---------------------------------------------------------------------------
// Disk cache

DiskCache::DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path DiskCache::file_for(const std::string& key) const {
    const std::string h = sha256_hex(key);
    return dir_ / h.substr(0, 2) / (h.substr(2) + ".json");
}

std::optional<std::string> DiskCache::get(const std::string& key) const {
    std::ifstream in(file_for(key), std::ios::binary);
    std::lock_guard lock(stats_mu_);
    if (!in) {
        ++misses_;
        return std::nullopt;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    ++hits_;
    return ss.str();
}

void DiskCache::put(const std::string& key, const std::string& value) {
    const auto path = file_for(key);
    std::lock_guard lock(write_mu_);
    std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write cache entry " + tmp.string());
        out << value;
    }
    std::filesystem::rename(tmp, path);
}

std::size_t DiskCache::hits() const {
    std::lock_guard lock(stats_mu_);
    return hits_;
}

std::size_t DiskCache::misses() const {
    std::lock_guard lock(stats_mu_);
    return misses_;
}

// ---------------------------------------------------------------------------
// Clients

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend, Options opts)
    : backend_(std::move(backend)), opts_(std::move(opts)) {}

ChatResponse ChatClient::chat_complete(ChatRequest req) {
    if (req.model.empty()) req.model = opts_.model;
    if (req.decoding.max_tokens <= 0) throw PreconditionError("max_tokens must be positive");
    if (opts_.char_cap > 0 && req.prompt_chars() > opts_.char_cap)
        throw ContextLengthError("prompt of " + std::to_string(req.prompt_chars()) +
                                 " characters exceeds cap of " + std::to_string(opts_.char_cap));

    const std::string key = "chat\n" + canonical_request(req);
    if (opts_.cache) {
        if (auto hit = opts_.cache->get(key)) {
            auto j = json::parse(*hit);
            return {j.at("text").get<std::string>(), j.at("finish_reason").get<std::string>()};
        }
    }
    ChatResponse resp;
    {
        std::optional<RequestLimiter::Permit> permit;
        if (opts_.limiter) permit.emplace(opts_.limiter->acquire());
        resp = backend_->complete(req);
    }
    {
        std::lock_guard lock(mu_);
        ++calls_;
    }
    if (opts_.cache) {
        json j{{"text", resp.text}, {"finish_reason", resp.finish_reason}};
        opts_.cache->put(key, j.dump(-1, ' ', false, json::error_handler_t::replace));
    }
    return resp;
}

std::size_t ChatClient::backend_calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

Embedder::Embedder(std::shared_ptr<EmbeddingBackend> backend, std::shared_ptr<DiskCache> cache,
                   std::shared_ptr<RequestLimiter> limiter)
    : backend_(std::move(backend)), disk_(std::move(cache)), limiter_(std::move(limiter)) {}

std::vector<EmbeddingVector> Embedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("no texts to embed");
    for (const auto& t : texts)
        if (t.empty()) throw PreconditionError("empty text");

    const std::string model = backend_->model();
    auto key_of = [&](const std::string& t) { return "embed\n" + model + "\n" + t; };

    std::vector<std::string> missing;
    {
        std::lock_guard lock(mu_);
        for (const auto& t : texts) {
            if (memo_.contains(t) ||
                std::find(missing.begin(), missing.end(), t) != missing.end())
                continue;
            if (disk_) {
                if (auto hit = disk_->get(key_of(t))) {
                    memo_[t] = json::parse(*hit).get<std::vector<double>>();
                    continue;
                }
            }
            missing.push_back(t);
        }
    }
    if (!missing.empty()) {
        std::vector<std::vector<double>> fresh;
        {
            std::optional<RequestLimiter::Permit> permit;
            if (limiter_) permit.emplace(limiter_->acquire());
            fresh = backend_->embed_batch(missing);
        }
        if (fresh.size() != missing.size())
            throw BackendError("embedding backend returned " + std::to_string(fresh.size()) +
                               " vectors for " + std::to_string(missing.size()) + " texts");
        std::lock_guard lock(mu_);
        calls_ += missing.size();
        for (std::size_t i = 0; i < missing.size(); ++i) {
            if (!dim_) dim_ = fresh[i].size();
            if (fresh[i].size() != *dim_)
                throw BackendError("embedding dimension " + std::to_string(fresh[i].size()) +
                                   " does not match " + std::to_string(*dim_) + " for model " + model);
            if (disk_) disk_->put(key_of(missing[i]), json(fresh[i]).dump());
            memo_[missing[i]] = std::move(fresh[i]);
        }
    }

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::lock_guard lock(mu_);
    for (const auto& t : texts) {
        EmbeddingVector v{memo_.at(t), model, sha256_hex(t)};
        if (!dim_) dim_ = v.values.size();
        if (v.values.size() != *dim_)
            throw BackendError("embedding dimension mismatch for model " + model);
        if (!(v.norm() > 0.0)) throw BackendError("zero-norm embedding for model " + model);
        out.push_back(std::move(v));
    }
    return out;
}

EmbeddingVector Embedder::embed_one(const std::string& text) { return embed({text}).front(); }

std::size_t Embedder::backend_calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::optional<std::size_t> Embedder::dimension() const {
    std::lock_guard lock(mu_);
    return dim_;
}

Scorer::Scorer(std::shared_ptr<ScoringBackend> backend, std::string model,
               std::shared_ptr<DiskCache> cache, std::shared_ptr<RequestLimiter> limiter)
    : backend_(std::move(backend)), model_(std::move(model)), cache_(std::move(cache)),
      limiter_(std::move(limiter)) {}

ContinuationScore Scorer::score_continuation(const std::string& context, const std::string& continuation) {
    if (trim(continuation).empty()) throw PreconditionError("empty continuation");
    const std::string key = "score\n" + model_ + "\n" + context + '\x1f' + continuation;
    std::vector<double> lps;
    std::optional<std::string> hit = cache_ ? cache_->get(key) : std::nullopt;
    if (hit) {
        lps = json::parse(*hit).get<std::vector<double>>();
    } else {
        {
            std::optional<RequestLimiter::Permit> permit;
            if (limiter_) permit.emplace(limiter_->acquire());
            lps = backend_->continuation_logprobs(context, continuation);
        }
        {
            std::lock_guard lock(mu_);
            ++calls_;
        }
        if (cache_) cache_->put(key, json(lps).dump());
    }
    if (lps.empty()) throw BackendError("scoring backend returned no continuation tokens");
    for (double lp : lps)
        if (!std::isfinite(lp) || lp > 0.0)
            throw BackendError("invalid token logprob " + std::to_string(lp));
    return {std::move(lps)};
}

double Scorer::binary_token_probability(const ChatRequest& prompt_in, const std::string& positive,
                                        const std::string& negative) {
    ChatRequest prompt = prompt_in;
    if (prompt.model.empty()) prompt.model = model_;
    const std::string key = "first\n" + canonical_request(prompt);
    std::vector<TokenLogprob> top;
    std::optional<std::string> hit = cache_ ? cache_->get(key) : std::nullopt;
    if (hit) {
        for (const auto& e : json::parse(*hit)) top.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
    } else {
        {
            std::optional<RequestLimiter::Permit> permit;
            if (limiter_) permit.emplace(limiter_->acquire());
            top = backend_->first_token_logprobs(prompt);
        }
        {
            std::lock_guard lock(mu_);
            ++calls_;
        }
        if (cache_) {
            json arr = json::array();
            for (const auto& t : top) arr.push_back({t.token, t.logprob});
            cache_->put(key, arr.dump());
        }
    }

    std::optional<double> lp_pos, lp_neg;
    double lowest = 0.0;
    for (const auto& t : top) {
        const std::string tok = trim(t.token);
        lowest = std::min(lowest, t.logprob);
        if (tok == positive && !lp_pos) lp_pos = t.logprob;
        if (tok == negative && !lp_neg) lp_neg = t.logprob;
    }
    if (!lp_pos && !lp_neg) throw BackendError("label tokens unranked");
    return binary_probability(lp_pos.value_or(lowest), lp_neg.value_or(lowest));
}

std::size_t Scorer::backend_calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

// ---------------------------------------------------------------------------
// OpenAI-compatible backends

namespace {

std::map<std::string, std::string> auth_headers(const HttpEndpoint& ep) {
    std::map<std::string, std::string> h;
    if (!ep.api_key.empty()) h["Authorization"] = "Bearer " + ep.api_key;
    return h;
}

json parse_body(const std::string& body, const char* what) {
    try {
        return json::parse(body);
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed ") + what + " response: " + e.what());
    }
}

class OpenAIChat : public ChatBackend {
public:
    OpenAIChat(HttpEndpoint ep, std::shared_ptr<HttpTransport> t, Sleeper s)
        : ep_(std::move(ep)), transport_(std::move(t)), sleep_(std::move(s)) {}

    ChatResponse complete(const ChatRequest& req) override {
        json msgs = json::array();
        if (!req.system_prompt.empty()) msgs.push_back({{"role", "system"}, {"content", req.system_prompt}});
        for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
        json body{{"model", req.model.empty() ? ep_.model : req.model}, {"messages", std::move(msgs)}};
        if (req.decoding.reasoning_effort) {
            body["reasoning_effort"] = *req.decoding.reasoning_effort;
            body["max_completion_tokens"] = req.decoding.max_tokens;
        } else {
            body["max_tokens"] = req.decoding.max_tokens;
        }
        body["temperature"] = req.decoding.greedy ? 0.0 : req.decoding.temperature;
        if (!req.decoding.greedy && req.decoding.seed) body["seed"] = req.decoding.seed;

        auto resp = parse_body(post_with_retry(*transport_, "/chat/completions", body.dump(),
                                               auth_headers(ep_), ep_.retry, sleep_),
                               "chat");
        try {
            const auto& choice = resp.at("choices").at(0);
            const auto& content = choice.at("message").at("content");
            return {content.is_null() ? std::string() : content.get<std::string>(),
                    choice.value("finish_reason", std::string())};
        } catch (const json::exception& e) {
            throw BackendError(std::string("unexpected chat response shape: ") + e.what());
        }
    }

private:
    HttpEndpoint ep_;
    std::shared_ptr<HttpTransport> transport_;
    Sleeper sleep_;
};

class OpenAIEmbedding : public EmbeddingBackend {
public:
    OpenAIEmbedding(HttpEndpoint ep, std::shared_ptr<HttpTransport> t, Sleeper s)
        : ep_(std::move(ep)), transport_(std::move(t)), sleep_(std::move(s)) {}

    std::string model() const override { return ep_.model; }

    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override {
        json body{{"model", ep_.model}, {"input", texts}};
        auto resp = parse_body(post_with_retry(*transport_, "/embeddings", body.dump(), auth_headers(ep_),
                                               ep_.retry, sleep_),
                               "embedding");
        std::vector<std::vector<double>> out(texts.size());
        try {
            for (const auto& item : resp.at("data")) {
                auto idx = item.value("index", 0);
                if (idx < 0 || static_cast<std::size_t>(idx) >= out.size())
                    throw BackendError("embedding index out of range");
                out[idx] = item.at("embedding").get<std::vector<double>>();
            }
        } catch (const json::exception& e) {
            throw BackendError(std::string("unexpected embedding response shape: ") + e.what());
        }
        return out;
    }

private:
    HttpEndpoint ep_;
    std::shared_ptr<HttpTransport> transport_;
    Sleeper sleep_;
};

class OpenAIScoring : public ScoringBackend {
public:
    OpenAIScoring(HttpEndpoint ep, std::shared_ptr<HttpTransport> t, Sleeper s)
        : ep_(std::move(ep)), transport_(std::move(t)), sleep_(std::move(s)) {}

    // Completions endpoint with echo: prompt tokens come back with logprobs and text offsets.
    std::vector<double> continuation_logprobs(const std::string& context,
                                              const std::string& continuation) override {
        json body{{"model", ep_.model}, {"prompt", context + continuation}, {"max_tokens", 1},
                  {"echo", true},       {"logprobs", 0},                    {"temperature", 0.0}};
        auto resp = parse_body(post_with_retry(*transport_, "/completions", body.dump(), auth_headers(ep_),
                                               ep_.retry, sleep_),
                               "scoring");
        std::vector<double> out;
        try {
            const auto& lp = resp.at("choices").at(0).at("logprobs");
            const auto& offsets = lp.at("text_offset");
            const auto& values = lp.at("token_logprobs");
            const std::size_t prompt_len = context.size() + continuation.size();
            for (std::size_t i = 0; i < offsets.size() && i < values.size(); ++i) {
                auto off = offsets[i].get<std::size_t>();
                if (off < context.size() || off >= prompt_len) continue;
                if (values[i].is_null()) throw BackendError("missing logprob for continuation token");
                out.push_back(values[i].get<double>());
            }
        } catch (const json::exception& e) {
            throw BackendError(std::string("unexpected scoring response shape: ") + e.what());
        }
        return out;
    }

    std::vector<TokenLogprob> first_token_logprobs(const ChatRequest& req) override {
        json msgs = json::array();
        if (!req.system_prompt.empty()) msgs.push_back({{"role", "system"}, {"content", req.system_prompt}});
        for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
        json body{{"model", req.model.empty() ? ep_.model : req.model},
                  {"messages", std::move(msgs)},
                  {"max_tokens", 1},
                  {"temperature", 0.0},
                  {"logprobs", true},
                  {"top_logprobs", 20}};
        auto resp = parse_body(post_with_retry(*transport_, "/chat/completions", body.dump(),
                                               auth_headers(ep_), ep_.retry, sleep_),
                               "logprob");
        std::vector<TokenLogprob> out;
        try {
            const auto& first = resp.at("choices").at(0).at("logprobs").at("content").at(0);
            for (const auto& t : first.at("top_logprobs"))
                out.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
        } catch (const json::exception& e) {
            throw BackendError(std::string("unexpected logprob response shape: ") + e.what());
        }
        return out;
    }

private:
    HttpEndpoint ep_;
    std::shared_ptr<HttpTransport> transport_;
    Sleeper sleep_;
};

std::shared_ptr<HttpTransport> transport_or_default(const HttpEndpoint& ep, std::shared_ptr<HttpTransport> t) {
    return t ? t : std::shared_ptr<HttpTransport>(make_http_transport(ep.base_url, ep.timeout));
}

}  // namespace

std::shared_ptr<ChatBackend> make_openai_chat(const HttpEndpoint& ep, std::shared_ptr<HttpTransport> t,
                                              Sleeper s) {
    return std::make_shared<OpenAIChat>(ep, transport_or_default(ep, std::move(t)),
                                        s ? std::move(s) : real_sleeper());
}

std::shared_ptr<EmbeddingBackend> make_openai_embedding(const HttpEndpoint& ep,
                                                        std::shared_ptr<HttpTransport> t, Sleeper s) {
    return std::make_shared<OpenAIEmbedding>(ep, transport_or_default(ep, std::move(t)),
                                             s ? std::move(s) : real_sleeper());
}

std::shared_ptr<ScoringBackend> make_openai_scoring(const HttpEndpoint& ep, std::shared_ptr<HttpTransport> t,
                                                    Sleeper s) {
    return std::make_shared<OpenAIScoring>(ep, transport_or_default(ep, std::move(t)),
                                           s ? std::move(s) : real_sleeper());
}

// ---------------------------------------------------------------------------
// Registry

std::string_view to_string(Role r) {
    switch (r) {
        case Role::annotate: return "annotate";
        case Role::judge: return "judge";
        case Role::student: return "student";
        case Role::embed: return "embed";
        case Role::kt: return "kt";
        case Role::tutor: return "tutor";
    }
    return "?";
}

bool BackendConfig::is_mock() const { return base_url.rfind("mock:", 0) == 0; }

BackendRegistry::BackendRegistry(BackendsConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.cache_dir.empty()) cache_ = std::make_shared<DiskCache>(cfg_.cache_dir);
    for (const auto& [role, name] : cfg_.roles) {
        auto it = std::find_if(cfg_.backends.begin(), cfg_.backends.end(),
                               [&](const BackendConfig& b) { return b.name == name; });
        if (it == cfg_.backends.end())
            throw ParseError("role " + std::string(to_string(role)) + " refers to unknown backend \"" + name + "\"");
        Capability need = Capability::chat;
        if (role == Role::embed) need = Capability::embed;
        if (role == Role::kt || role == Role::tutor) need = Capability::score;
        if (!it->has(need))
            throw CapabilityError("backend \"" + name + "\" lacks the capability required by role " +
                                  std::string(to_string(role)));
    }
}

bool BackendRegistry::has_role(Role role) const { return cfg_.roles.contains(role); }

const BackendConfig& BackendRegistry::config_for(Role role) const {
    auto it = cfg_.roles.find(role);
    if (it == cfg_.roles.end())
        throw PreconditionError("no backend configured for role " + std::string(to_string(role)));
    for (const auto& b : cfg_.backends)
        if (b.name == it->second) return b;
    throw PreconditionError("unknown backend " + it->second);
}

const BackendConfig& BackendRegistry::require(Role role, Capability cap) const {
    const auto& c = config_for(role);
    if (!c.has(cap)) throw CapabilityError("backend \"" + c.name + "\" lacks a required capability");
    return c;
}

std::shared_ptr<RequestLimiter> BackendRegistry::limiter_for(const BackendConfig& c) {
    auto& l = limiters_[c.name];
    if (!l) l = std::make_shared<RequestLimiter>(c.max_in_flight, c.requests_per_second);
    return l;
}

namespace {

HttpEndpoint endpoint_of(const BackendConfig& c) {
    HttpEndpoint ep;
    ep.base_url = c.base_url;
    ep.model = c.model;
    ep.retry = c.retry;
    if (!c.api_key_env.empty()) {
        const char* v = std::getenv(c.api_key_env.c_str());
        if (!v || !*v) throw AuthError("environment variable " + c.api_key_env + " is not set");
        ep.api_key = v;
    }
    return ep;
}

}  // namespace

std::shared_ptr<ChatClient> BackendRegistry::chat(Role role) {
    const auto& c = require(role, Capability::chat);
    auto& client = chats_[c.name];
    if (!client) {
        auto backend = c.is_mock() ? make_mock_chat(c.base_url) : make_openai_chat(endpoint_of(c));
        client = std::make_shared<ChatClient>(
            backend, ChatClient::Options{c.model, c.char_cap, cache_, limiter_for(c)});
    }
    return client;
}

std::shared_ptr<Embedder> BackendRegistry::embedder(Role role) {
    const auto& c = require(role, Capability::embed);
    auto& e = embedders_[c.name];
    if (!e) {
        auto backend = c.is_mock() ? make_mock_embedding(c.base_url, c.model)
                                   : make_openai_embedding(endpoint_of(c));
        e = std::make_shared<Embedder>(backend, cache_, limiter_for(c));
    }
    return e;
}

std::shared_ptr<Scorer> BackendRegistry::scorer(Role role) {
    const auto& c = require(role, Capability::score);
    auto& s = scorers_[c.name];
    if (!s) {
        auto backend = c.is_mock() ? make_mock_scoring(c.base_url) : make_openai_scoring(endpoint_of(c));
        s = std::make_shared<Scorer>(backend, c.model, cache_, limiter_for(c));
    }
    return s;
}

}  // namespace simeval
