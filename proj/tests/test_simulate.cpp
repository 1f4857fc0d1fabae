#include <doctest.h>

#include <random>

#include "simeval/error.hpp"
#include "simeval/metrics.hpp"
#include "simeval/mock.hpp"
#include "simeval/prompts.hpp"
#include "simeval/simulate.hpp"
#include "support.hpp"

using namespace simeval;

TEST_CASE("method defaults") {
    auto z = SimMethodConfig::defaults(SimMethod::zero_shot);
    CHECK(z.decoding.greedy);
    CHECK(z.decoding.max_tokens == 400);
    auto r = SimMethodConfig::defaults(SimMethod::reasoning);
    CHECK_FALSE(r.decoding.greedy);
    CHECK(r.decoding.max_tokens == 15000);
    CHECK(r.decoding.reasoning_effort == "medium");
}

TEST_CASE("prompt alternates tutor/user and student/assistant") {
    auto d = testing::make_dialogue("p", 3);
    auto slot = slot_at(d, 5);
    auto req = render_prompt(SimMethodConfig::defaults(SimMethod::zero_shot), d, slot, {});
    CHECK(req.system_prompt == prompts::kZeroShot);
    // question message, then tutor turn 0 merges into the user message
    REQUIRE(req.messages.size() == 5);
    CHECK(req.messages[0].role == "user");
    CHECK(req.messages[0].content.find("Question: What is 1/2 + 1/3?") != std::string::npos);
    CHECK(req.messages[0].content.find(d.turns[0].text) != std::string::npos);
    CHECK(req.messages[1].role == "assistant");
    CHECK(req.messages[1].content == d.turns[1].text);
    CHECK(req.messages.back().role == "user");
    CHECK(req.messages.back().content == d.turns[4].text);
}

TEST_CASE("method material is required and rendered") {
    auto d = testing::make_dialogue("m", 2);
    auto slot = slot_at(d, 3);
    auto ocean = SimMethodConfig::defaults(SimMethod::ocean);
    CHECK_THROWS_AS(render_prompt(ocean, d, slot, {}), PreconditionError);
    AnnotationSet a;
    a.persona = OceanPersona{};
    a.oracle_summary = "Gives up quickly.";
    SimInputs in{&a, nullptr};
    CHECK(render_prompt(ocean, d, slot, in).messages[0].content.find("Big Five persona:") != std::string::npos);
    auto oracle = render_prompt(SimMethodConfig::defaults(SimMethod::oracle), d, slot, in);
    CHECK(oracle.messages[0].content.find("Gives up quickly.") != std::string::npos);
    CHECK_THROWS_AS(render_prompt(SimMethodConfig::defaults(SimMethod::icl), d, slot, in), PreconditionError);
    auto example = testing::make_dialogue("example", 1);
    SimInputs icl{&a, &example};
    CHECK(render_prompt(SimMethodConfig::defaults(SimMethod::icl), d, slot, icl)
              .messages[0]
              .content.find("Example dialogue:") != std::string::npos);
    auto reasoning = render_prompt(SimMethodConfig::defaults(SimMethod::reasoning), d, slot, in);
    CHECK(reasoning.system_prompt.find("Reason about how to respond") != std::string::npos);
}

TEST_CASE("sentinel stripping") {
    auto [t, ended] = strip_sentinel("ok bye <end_of_dialogue>");
    CHECK(t == "ok bye");
    CHECK(ended);
    auto [u, more] = strip_sentinel("still here");
    CHECK(u == "still here");
    CHECK_FALSE(more);

    auto d = testing::make_dialogue("e", 2);
    auto chat = std::make_shared<MockChatBackend>([](const ChatRequest&) { return "<end_of_dialogue>"; });
    ChatClient client(chat, {});
    CHECK_THROWS_AS(generate_candidate(SimMethodConfig::defaults(SimMethod::zero_shot), d, slot_at(d, 1), {}, client),
                    PreconditionError);
}

TEST_CASE("retrieval picks the nearest entry and breaks ties by id") {
    RetrievalIndex idx;
    idx.add("b", {1.0, 0.0});
    idx.add("a", {1.0, 0.0});
    idx.add("c", {0.0, 1.0});
    CHECK(idx.retrieve({1.0, 0.1}) == "a");
    CHECK(idx.retrieve({1.0, 0.1}, "a") == "b");
    CHECK(idx.retrieve({0.1, 1.0}) == "c");
    CHECK_THROWS_AS(idx.add("a", {0.0, 1.0}), PreconditionError);
    CHECK_THROWS_AS(idx.add("d", {0.0, 1.0, 2.0}), PreconditionError);
    CHECK_THROWS_AS(idx.retrieve({1.0}), PreconditionError);
    CHECK_THROWS_AS(RetrievalIndex{}.retrieve({1.0}), PreconditionError);
}

TEST_CASE("retrieval equals a brute-force nearest-neighbor scan") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        RetrievalIndex idx;
        std::vector<std::pair<std::string, std::vector<double>>> entries;
        const int n = 1 + trial % 12;
        for (int i = 0; i < n; ++i) {
            std::vector<double> v(6);
            for (auto& x : v) x = z(rng);
            entries.push_back({"e" + std::to_string(i), v});
            idx.add(entries.back().first, v);
        }
        std::vector<double> q(6);
        for (auto& x : q) x = z(rng);
        std::string want;
        double best = -2.0;
        for (const auto& [id, v] : entries) {
            const double s = cosine_similarity(v, q);
            if (s > best) {
                best = s;
                want = id;
            }
        }
        REQUIRE(retrieve_icl_example(idx, q) == want);
    }
}

TEST_CASE("retrieval index covers the train split only") {
    Corpus c;
    for (auto [id, split] : {std::pair{"tr", Split::train}, {"te", Split::test}, {"va", Split::validation}}) {
        auto d = testing::make_dialogue(id, 2);
        d.split = split;
        c.dialogues.push_back(d);
        c.annotations_mut(id).oracle_summary = std::string("summary of ") + id;
    }
    Embedder embedder(make_mock_embedding("mock:hash?dim=16", "m"));
    auto idx = build_retrieval_index(c, embedder);
    CHECK(idx.size() == 1);
    CHECK(idx.retrieve(embedder.embed_one("summary of te").values) == "tr");
}

TEST_CASE("sampling gives distinct seeds and sample ids") {
    auto d = testing::make_dialogue("s", 3);
    std::vector<std::uint64_t> seeds;
    auto chat = std::make_shared<MockChatBackend>([&](const ChatRequest& r) {
        CHECK_FALSE(r.decoding.greedy);
        seeds.push_back(r.decoding.seed);
        return "answer " + std::to_string(r.decoding.seed % 97);
    });
    ChatClient client(chat, {});
    auto cfg = SimMethodConfig::defaults(SimMethod::zero_shot);
    auto out = sample_candidates(cfg, d, slot_at(d, 3), {}, client, 4);
    REQUIRE(out.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(out[i].sample_id == i);
    CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == 4);
    CHECK_THROWS_AS(sample_candidates(cfg, d, slot_at(d, 3), {}, client, 1), PreconditionError);
}

TEST_CASE("simulate_corpus covers every slot and respects the ordinal floor") {
    auto c = load_corpus(testing::fixture("dialogues.jsonl")).corpus;
    ChatClient chat(make_heuristic_chat(), {});
    SimulateOptions opts;
    opts.method = SimMethodConfig::defaults(SimMethod::zero_shot);
    auto all = simulate_corpus(c, opts, chat);
    std::size_t slots = 0;
    for (const auto& d : c.dialogues) slots += student_turn_slots(d).size();
    CHECK(all.size() == slots);

    opts.samples = 2;
    opts.min_student_ordinal = 5;
    opts.workers = 2;
    auto late = simulate_corpus(c, opts, chat);
    for (const auto& cand : late) CHECK(slot_at(*c.find(cand.dialogue_id), cand.turn_index).student_ordinal >= 5);
    CHECK(late == simulate_corpus(c, opts, chat));
}
