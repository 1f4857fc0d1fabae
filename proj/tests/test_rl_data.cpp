#include <doctest.h>

#include <algorithm>
#include <random>

#include "simeval/error.hpp"
#include "simeval/json_io.hpp"
#include "simeval/prompts.hpp"
#include "simeval/rl_data.hpp"
#include "support.hpp"

using namespace simeval;

namespace {

SlotCandidates slot_with(std::vector<double> rewards, int ordinal = 6) {
    SlotCandidates s;
    s.dialogue_id = "d";
    s.turn_index = 2 * ordinal + 1;
    s.pair_index = ordinal + 1;
    s.student_ordinal = ordinal;
    for (std::size_t i = 0; i < rewards.size(); ++i)
        s.candidates.push_back({"c" + std::to_string(i), rewards[i], static_cast<int>(i)});
    return s;
}

MetricReport report_with(std::array<std::optional<double>, 7> v) {
    MetricReport r;
    for (std::size_t k = 0; k < 7; ++k) r.metrics[k].value = v[k];
    return r;
}

}  // namespace

TEST_CASE("worked example yields exactly four pairs") {
    RewardConfig cfg;
    auto pairs = build_preference_pairs(slot_with({0.9, 0.75, 0.85, 0.2}), cfg);
    REQUIRE(pairs.size() == 4);
    CHECK(pairs[0].chosen == "c0");
    CHECK(pairs[0].rejected == "c3");
    CHECK(pairs[0].margin == doctest::Approx(0.7));
    for (std::size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i - 1].margin >= pairs[i].margin);
    for (const auto& p : pairs) CHECK(p.margin > 0.1);

    cfg.strict = false;
    CHECK(build_preference_pairs(slot_with({0.9, 0.75, 0.85, 0.2}), cfg).size() == 5);
}

TEST_CASE("early slots yield nothing under each counting") {
    RewardConfig cfg;
    CHECK(build_preference_pairs(slot_with({1.0, 0.0}, 4), cfg).empty());
    CHECK(build_preference_pairs(slot_with({1.0, 0.0}, 5), cfg).size() == 1);
    auto s = slot_with({1.0, 0.0}, 4);
    cfg.counting = TurnCounting::turn_pairs;
    CHECK(slot_position(s, cfg.counting) == 5);
    CHECK(build_preference_pairs(s, cfg).size() == 1);
    cfg.counting = TurnCounting::raw_turns;
    CHECK(slot_position(s, cfg.counting) == 9);
    CHECK(turn_counting_from_string("turn_pairs") == TurnCounting::turn_pairs);
    CHECK_THROWS_AS(turn_counting_from_string("pairs"), ParseError);
}

TEST_CASE("pair builder agrees with an all-pairs oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RewardConfig cfg;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> r(4);
        for (auto& x : r) x = std::round(u(rng) * 20) / 20;  // ties and exact-epsilon gaps
        auto got = build_preference_pairs(slot_with(r), cfg);
        std::multiset<std::pair<std::string, std::string>> want, have;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                if (r[i] - r[j] > cfg.epsilon) want.insert({"c" + std::to_string(i), "c" + std::to_string(j)});
        for (const auto& p : got) {
            have.insert({p.chosen, p.rejected});
            CHECK(p.margin > cfg.epsilon);
        }
        REQUIRE(have == want);
    }
}

TEST_CASE("reward aggregation averages included applicable metrics") {
    RewardConfig cfg;
    auto r = report_with({1.0, std::nullopt, std::nullopt, 0.5, 0.0, 0.25, 0.75});
    CHECK(aggregate_reward(r, cfg) == doctest::Approx(0.5));
    cfg.included = {Metric::rouge_l};
    CHECK(aggregate_reward(r, cfg) == 0.25);
    cfg.included = {Metric::errors};
    CHECK_FALSE(aggregate_reward(r, cfg).has_value());
    cfg.included.clear();
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    RewardConfig neg;
    neg.epsilon = -0.1;
    CHECK_THROWS_AS(neg.validate(), PreconditionError);
}

TEST_CASE("export sorts by dialogue, turn and margin and writes four fields") {
    testing::TempDir dir("pairs");
    std::vector<PreferencePair> pairs{
        {"b", 3, {{"system", "s"}}, "x", "y", 0.2},
        {"a", 5, {{"system", "s"}}, "x", "y", 0.3},
        {"a", 3, {{"system", "s"}}, "x", "y", 0.2},
        {"a", 3, {{"system", "s"}}, "x", "z", 0.9},
    };
    export_pairs(pairs, dir / "p.jsonl");
    auto recs = read_jsonl(dir / "p.jsonl");
    REQUIRE(recs.size() == 4);
    CHECK(recs[0]["margin"] == 0.9);
    CHECK(recs[1]["margin"] == 0.2);
    CHECK(recs[2]["margin"] == 0.3);
    CHECK(recs[3]["margin"] == 0.2);
    for (const auto& r : recs) {
        CHECK(r.size() == 4);
        CHECK(r["prompt"][0]["role"] == "system");
    }
    export_pairs({}, dir / "empty.jsonl");
    CHECK(std::filesystem::exists(dir / "empty.jsonl"));
    CHECK(std::filesystem::file_size(dir / "empty.jsonl") == 0);
}

TEST_CASE("pairs from reports join candidates per system and use the fine-tuned prompt") {
    Corpus c;
    c.dialogues.push_back(testing::make_dialogue("d", 8));
    std::vector<CandidateTurn> cands;
    std::vector<MetricReport> reports;
    for (const auto& s : student_turn_slots(c.dialogues[0])) {
        for (const std::string sys : {"a", "b"}) {
            for (int k = 0; k < 4; ++k) {
                CandidateTurn ct;
                ct.dialogue_id = "d";
                ct.turn_index = s.turn_index;
                ct.text = sys + std::to_string(k);
                ct.system = sys;
                ct.sample_id = k;
                cands.push_back(ct);
                MetricReport r;
                r.dialogue_id = "d";
                r.turn_index = s.turn_index;
                r.system = sys;
                r.sample_id = k;
                if (!(sys == "b" && k == 3)) r.at(Metric::rouge_l).value = 0.3 * k;
                reports.push_back(r);
            }
        }
    }
    RewardConfig cfg;
    auto res = build_pairs_from_reports(c, cands, reports, cfg);
    CHECK(res.stats.slots == 16);
    CHECK(res.stats.slots_too_early == 10);
    CHECK(res.stats.undefined_rewards == 8);
    CHECK(res.stats.slots_unexpected_count == 8);
    // system a: 6 pairs per slot, system b (3 candidates): 3 pairs per slot, over 3 late slots
    CHECK(res.pairs.size() == 3 * (6 + 3));
    for (const auto& p : res.pairs) {
        CHECK(p.chosen[0] == p.rejected[0]);
        REQUIRE(p.prompt.size() >= 2);
        CHECK(p.prompt[0].role == "system");
        CHECK(p.prompt[0].content == prompts::kStudentFineTuned);
    }

    reports.push_back(reports[0]);
    reports.back().sample_id = 99;
    CHECK_THROWS_AS(build_pairs_from_reports(c, cands, reports, cfg), PreconditionError);
}
