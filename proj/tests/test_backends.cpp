#include <doctest.h>

#include <random>

#include <cmath>
#include <deque>

#include "simeval/backends.hpp"
#include "simeval/error.hpp"
#include "simeval/json_io.hpp"
#include "simeval/mock.hpp"
#include "support.hpp"

using namespace simeval;

namespace {

class ScriptedTransport : public HttpTransport {
public:
    std::deque<HttpResult> replies;
    std::vector<std::string> bodies;

    HttpResult post_json(const std::string&, const std::string& body,
                         const std::map<std::string, std::string>&) override {
        bodies.push_back(body);
        if (replies.empty()) return {500, "exhausted", ""};
        auto r = replies.front();
        replies.pop_front();
        return r;
    }
};

ChatRequest simple_request(const std::string& text) {
    ChatRequest r;
    r.system_prompt = "sys";
    r.messages.push_back({"user", text});
    return r;
}

}  // namespace

TEST_CASE("canonical_request omits temperature when greedy") {
    auto r = simple_request("x");
    r.decoding.temperature = 0.3;
    auto greedy = canonical_request(r);
    CHECK(greedy.find("temperature") == std::string::npos);
    r.decoding.temperature = 0.9;
    CHECK(canonical_request(r) == greedy);
    r.decoding.greedy = false;
    CHECK(canonical_request(r).find("temperature") != std::string::npos);
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("post_with_retry backs off on transient errors") {
    ScriptedTransport t;
    t.replies = {{0, "", "refused"}, {429, "slow down", ""}, {503, "", ""}, {200, "{\"ok\":1}", ""}};
    std::vector<std::chrono::milliseconds> waits;
    RetryPolicy p;
    p.base_delay = std::chrono::milliseconds(100);
    auto body = post_with_retry(t, "/x", "{}", {}, p, [&](auto d) { waits.push_back(d); });
    CHECK(body == "{\"ok\":1}");
    REQUIRE(waits.size() == 3);
    CHECK(waits[1] >= waits[0]);
    CHECK(waits[2] >= waits[1]);

    ScriptedTransport auth;
    auth.replies = {{401, "no", ""}};
    CHECK_THROWS_AS(post_with_retry(auth, "/x", "{}", {}, p, [](auto) {}), AuthError);

    ScriptedTransport ctx;
    ctx.replies = {{400, "{\"error\":{\"code\":\"context_length_exceeded\"}}", ""}};
    CHECK_THROWS_AS(post_with_retry(ctx, "/x", "{}", {}, p, [](auto) {}), ContextLengthError);

    ScriptedTransport dead;
    p.max_retries = 2;
    CHECK_THROWS_AS(post_with_retry(dead, "/x", "{}", {}, p, [](auto) {}), BackendError);
    CHECK(dead.bodies.size() == 3);
}

TEST_CASE("OpenAI-compatible chat backend parses responses through an injected transport") {
    auto t = std::make_shared<ScriptedTransport>();
    t->replies = {{200, R"({"choices":[{"message":{"content":"hello"},"finish_reason":"stop"}]})", ""}};
    HttpEndpoint ep{"http://unused", "m", "", {}, std::chrono::seconds(5)};
    auto chat = make_openai_chat(ep, t, [](auto) {});
    auto r = chat->complete(simple_request("hi"));
    CHECK(r.text == "hello");
    CHECK(r.finish_reason == "stop");
    auto sent = json::parse(t->bodies.at(0));
    CHECK(sent["messages"][0]["role"] == "system");
    CHECK(sent["temperature"] == 0.0);

    t->replies = {{200, R"({"nope":true})", ""}};
    CHECK_THROWS_AS(chat->complete(simple_request("hi")), BackendError);
}

TEST_CASE("OpenAI-compatible scoring keeps only continuation tokens") {
    auto t = std::make_shared<ScriptedTransport>();
    // context "ab" (2 chars) + continuation "cd": tokens at offsets 0,1,2,3
    t->replies = {{200,
                   R"({"choices":[{"logprobs":{"text_offset":[0,1,2,3],"token_logprobs":[null,-1.0,-0.5,-0.25]}}]})",
                   ""}};
    HttpEndpoint ep{"http://unused", "m", "", {}, std::chrono::seconds(5)};
    auto s = make_openai_scoring(ep, t, [](auto) {});
    auto lps = s->continuation_logprobs("ab", "cd");
    REQUIRE(lps.size() == 2);
    CHECK(lps[0] == -0.5);
    CHECK(lps[1] == -0.25);
}

TEST_CASE("ChatClient enforces the character cap and caches responses on disk") {
    testing::TempDir dir("cache");
    int calls = 0;
    auto backend = std::make_shared<MockChatBackend>([&](const ChatRequest& r) {
        ++calls;
        return "echo " + r.messages.at(0).content;
    });
    ChatClient::Options o;
    o.model = "m";
    o.cache = std::make_shared<DiskCache>(dir.path());
    ChatClient c(backend, o);
    CHECK(c.chat_complete(simple_request("a")).text == "echo a");
    CHECK(c.chat_complete(simple_request("a")).text == "echo a");
    CHECK(calls == 1);
    CHECK(o.cache->hits() == 1);

    ChatClient fresh(backend, o);
    CHECK(fresh.chat_complete(simple_request("a")).text == "echo a");
    CHECK(calls == 1);

    ChatClient::Options capped;
    capped.char_cap = 5;
    ChatClient small(backend, capped);
    CHECK_THROWS_AS(small.chat_complete(simple_request("a long prompt")), ContextLengthError);
    CHECK(calls == 1);
}

TEST_CASE("Embedder memoizes and validates") {
    auto backend = std::make_shared<HashEmbeddingBackend>(32);
    Embedder e(backend);
    auto a = e.embed({"one", "two", "one"});
    REQUIRE(a.size() == 3);
    CHECK(a[0].values == a[2].values);
    CHECK(e.backend_calls() == 2);
    CHECK(a[0].norm() == doctest::Approx(1.0));
    CHECK(e.dimension() == 32u);
    CHECK_THROWS_AS(e.embed({""}), PreconditionError);
    CHECK_THROWS_AS(e.embed({}), PreconditionError);
}

TEST_CASE("Scorer two-way softmax over label tokens") {
    CHECK(binary_probability(std::log(0.3), std::log(0.1)) == doctest::Approx(0.75));
    CHECK(binary_probability(-1.2, -0.4) + binary_probability(-0.4, -1.2) == 1.0);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> lp(-40.0, 0.0);
    for (int i = 0; i < 100000; ++i) {
        const double a = lp(rng), b = i % 7 == 0 ? a : lp(rng);
        REQUIRE(binary_probability(a, b) + binary_probability(b, a) == 1.0);
    }

    Scorer uniform(make_uniform_scoring(0.2), "u");
    CHECK(uniform.binary_token_probability(simple_request("q"), "True", "False") == doctest::Approx(0.5));
    auto s = uniform.score_continuation("ctx", "three word continuation");
    REQUIRE(s.token_count() == 3);
    for (double lp : s.token_logprobs) CHECK(lp == doctest::Approx(std::log(0.2)));
    CHECK_THROWS_AS(uniform.score_continuation("ctx", "  "), PreconditionError);

    auto only_true = std::make_shared<MockScoringBackend>(
        [](const std::string&, const std::string&, std::size_t) { return 0.5; },
        [](const ChatRequest&) { return std::vector<TokenLogprob>{{"True", -0.1}, {"Maybe", -3.0}}; });
    Scorer partial(only_true, "p");
    CHECK(partial.binary_token_probability(simple_request("q"), "True", "False") ==
          doctest::Approx(binary_probability(-0.1, -3.0)));

    auto none = std::make_shared<MockScoringBackend>(
        [](const std::string&, const std::string&, std::size_t) { return 0.5; },
        [](const ChatRequest&) { return std::vector<TokenLogprob>{{"Maybe", -1.0}}; });
    Scorer unranked(none, "n");
    CHECK_THROWS_AS(unranked.binary_token_probability(simple_request("q"), "True", "False"), BackendError);
}

TEST_CASE("RequestLimiter caps concurrency") {
    RequestLimiter lim(2, 0.0);
    {
        auto a = lim.acquire();
        auto b = lim.acquire();
        CHECK(lim.in_flight() == 2);
    }
    CHECK(lim.in_flight() == 0);
}

TEST_CASE("backend registry resolves roles and checks capabilities") {
    auto cfg = backends_config_from_json(R"({
        "backends": [
            {"name": "llm", "base_url": "mock:heuristic", "capabilities": ["chat"]},
            {"name": "emb", "base_url": "mock:hash?dim=16", "capabilities": ["embed"]}
        ],
        "roles": {"annotate": "llm", "embed": "emb"}
    })");
    CHECK(cfg.backends.size() == 2);
    CHECK(cfg.backends[0].is_mock());
    BackendRegistry reg(cfg);
    CHECK(reg.has_role(Role::annotate));
    CHECK_FALSE(reg.has_role(Role::tutor));
    CHECK(reg.chat(Role::annotate) != nullptr);
    CHECK(reg.embedder()->embed_one("x").values.size() == 16);
    CHECK_THROWS(reg.scorer(Role::kt));
    auto wrong = cfg;
    wrong.roles[Role::kt] = "llm";
    CHECK_THROWS_AS(BackendRegistry{wrong}, CapabilityError);
    wrong.roles[Role::kt] = "ghost";
    CHECK_THROWS_AS(BackendRegistry{wrong}, ParseError);
    CHECK_THROWS_AS(backends_config_from_json("{\"backends\": 3}"), ParseError);

    auto toml = load_backends_config(testing::fixture("backends.toml"));
    CHECK(toml.roles.size() == 6);
}
