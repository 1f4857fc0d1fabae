#include <doctest.h>

#include <cmath>
#include <random>

#include "simeval/error.hpp"
#include "simeval/metrics.hpp"
#include "simeval/mock.hpp"
#include "simeval/prompts.hpp"
#include "support.hpp"

using namespace simeval;

namespace {

std::size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t i = 0,
                       std::size_t j = 0) {
    if (i == a.size() || j == b.size()) return 0;
    if (a[i] == b[j]) return 1 + lcs_oracle(a, b, i + 1, j + 1);
    return std::max(lcs_oracle(a, b, i + 1, j), lcs_oracle(a, b, i, j + 1));
}

// KT mock: P(True) rises with the number of "5/6" mentions in the dialogue.
std::shared_ptr<ScoringBackend> counting_kt() {
    return std::make_shared<MockScoringBackend>(
        [](const std::string&, const std::string&, std::size_t) { return 0.5; },
        [](const ChatRequest& req) {
            const auto& text = req.messages.at(0).content;
            int n = 0;
            for (auto p = text.find("5/6"); p != std::string::npos; p = text.find("5/6", p + 1)) ++n;
            const double p = std::min(0.95, 0.3 + 0.1 * n);
            return std::vector<TokenLogprob>{{"True", std::log(p)}, {"False", std::log(1 - p)}};
        });
}

struct Harness {
    Dialogue d = testing::make_dialogue("h", 4);
    AnnotationSet a;
    std::shared_ptr<ChatClient> acts;
    std::shared_ptr<ChatClient> judge;
    std::shared_ptr<Embedder> embed = std::make_shared<Embedder>(std::make_shared<HashEmbeddingBackend>(64));
    std::shared_ptr<Scorer> kt = std::make_shared<Scorer>(counting_kt(), "kt");
    std::shared_ptr<Scorer> tutor = std::make_shared<Scorer>(make_uniform_scoring(0.2), "tutor");
    std::string verdict = "correct";
    std::string act = "Math Answer";
    int judge_calls = 0;

    Harness() {
        for (const auto& t : d.turns) {
            if (t.speaker == Speaker::student) {
                a.acts[t.index] = ActLabel::MathAnswer;
                a.correctness[t.index] = CorrectnessLabel::correct;
            } else {
                a.kcs[t.index] = {"Adding fractions"};
            }
        }
        acts = std::make_shared<ChatClient>(std::make_shared<MockChatBackend>([this](const ChatRequest&) {
            std::string out = "{";
            for (int i = 0; i < 20; ++i)
                out += (i ? ", \"turn " : "\"turn ") + std::to_string(i) + "\": {\"act\": \"" + act + "\"}";
            return out + "}";
        }), ChatClient::Options{});
        judge = std::make_shared<ChatClient>(std::make_shared<MockChatBackend>([this](const ChatRequest&) {
            ++judge_calls;
            return "Reasoning...\n" + verdict;
        }), ChatClient::Options{});
    }

    EvalBackends backends() { return {acts.get(), judge.get(), embed.get(), kt.get(), tutor.get()}; }

    CandidateTurn cand(int turn, std::string text) {
        CandidateTurn c;
        c.dialogue_id = d.id;
        c.turn_index = turn;
        c.text = std::move(text);
        c.method = SimMethod::zero_shot;
        return c;
    }
};

}  // namespace

TEST_CASE("ROUGE-L reproduces the worked example") {
    const std::string ref = "5/8 divided by 1/6?";
    CHECK(rouge_l("5/8 divided by 1/6", ref) == doctest::Approx(1.0).epsilon(5e-5));
    CHECK(rouge_l("5/8", ref) == doctest::Approx(0.5).epsilon(5e-5));
    CHECK(rouge_l("8/5", ref) == doctest::Approx(0.25).epsilon(5e-5));
    CHECK(rouge_l("So, would I divide 1/6 by 5/8?", ref) == doctest::Approx(4.0 / 15.0).epsilon(5e-5));
}

TEST_CASE("ROUGE-L tokenization and empty conventions") {
    CHECK(rouge_tokenize("So, would I divide 1/6?") ==
          std::vector<std::string>{"so", "would", "i", "divide", "1", "6"});
    CHECK(rouge_tokenize(" ?! ").empty());
    CHECK(rouge_l("", "") == 1.0);
    CHECK(rouge_l("...", "!!") == 1.0);
    CHECK(rouge_l("a", "") == 0.0);
    CHECK(rouge_l("", "a") == 0.0);
    auto s = rouge_l_score("a b c", "a c");
    CHECK(s.lcs == 2);
    CHECK(s.precision == doctest::Approx(2.0 / 3.0));
    CHECK(s.recall == 1.0);
}

TEST_CASE("LCS agrees with a recursive oracle") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> len(0, 8), tok(0, 3);
    for (int i = 0; i < 300; ++i) {
        std::vector<std::string> a(len(rng)), b(len(rng));
        for (auto& x : a) x = std::string(1, static_cast<char>('a' + tok(rng)));
        for (auto& x : b) x = std::string(1, static_cast<char>('a' + tok(rng)));
        REQUIRE(lcs_length(a, b) == lcs_oracle(a, b));
    }
}

TEST_CASE("swapping ROUGE arguments swaps precision and recall") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> len(1, 10), tok(0, 3);
    for (int i = 0; i < 300; ++i) {
        std::string a, b;
        for (int k = len(rng); k > 0; --k) a += std::string(1, static_cast<char>('a' + tok(rng))) + " ";
        for (int k = len(rng); k > 0; --k) b += std::string(1, static_cast<char>('a' + tok(rng))) + " ";
        auto ab = rouge_l_score(a, b), ba = rouge_l_score(b, a);
        CHECK(ab.precision == ba.recall);
        CHECK(ab.recall == ba.precision);
    }
}

TEST_CASE("knowledge similarity range, identity and KC permutation") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> q(0, 4), kcs(1, 6);
    for (int trial = 0; trial < 300; ++trial) {
        std::map<std::string, int> gt, cand, gt_p, cand_p;
        const int n = kcs(rng);
        for (int i = 0; i < n; ++i) {
            gt["kc" + std::to_string(i)] = q(rng);
            cand["kc" + std::to_string(i)] = trial % 5 == 0 ? gt["kc" + std::to_string(i)] : q(rng);
        }
        // the same relabeling applied to both vectors
        for (int i = 0; i < n; ++i) {
            gt_p["p" + std::to_string((i * 5 + 3) % n)] = gt["kc" + std::to_string(i)];
            cand_p["p" + std::to_string((i * 5 + 3) % n)] = cand["kc" + std::to_string(i)];
        }
        const double s = knowledge_similarity(gt, cand);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        CHECK((s == 1.0) == (gt == cand));
        if (n % 5 != 0) CHECK(knowledge_similarity(gt_p, cand_p) == s);
    }
}

TEST_CASE("knowledge similarity worked example and quantization") {
    std::map<std::string, int> gt, cand;
    const int g[6] = {2, 2, 1, 2, 2, 1};
    for (int i = 0; i < 6; ++i) {
        gt["kc" + std::to_string(i)] = g[i];
        cand["kc" + std::to_string(i)] = 3;
    }
    auto dist = knowledge_distance(gt, cand);
    CHECK(dist.numerator == 8);
    CHECK(dist.denominator == 24);
    CHECK(knowledge_similarity(gt, cand) == doctest::Approx(1.0 - 8.0 / 24.0));

    QuantileBoundaries b;
    b.upper = {-0.0234, 0.0000, 0.0156, 0.0430};
    CHECK(quantize(0.0117, b) == 2);
    CHECK(quantize(0.0391, b) == 3);
    CHECK(quantize(-1.0, b) == 0);
    CHECK(quantize(0.0, b) == 1);
    CHECK(quantize(0.5, b) == 4);
    CHECK_THROWS_AS(quantize(std::nan(""), b), PreconditionError);

    cand.erase("kc0");
    CHECK_THROWS_AS(knowledge_similarity(gt, cand), PreconditionError);
    cand["kc0"] = 5;
    CHECK_THROWS_AS(knowledge_similarity(gt, cand), PreconditionError);
}

TEST_CASE("quantile boundaries interpolate between order statistics") {
    auto b = fit_quantile_boundaries({5, 1, 4, 2, 3, 6}, "test");
    // n-1 = 5: h = 1, 2, 3, 4 -> sorted values 2, 3, 4, 5
    CHECK(b.upper == std::array<double, 4>{2, 3, 4, 5});
    CHECK(b.fit_count == 6);
    auto c = fit_quantile_boundaries({0, 10, 20, 30, 40});
    CHECK(c.upper[0] == doctest::Approx(8.0));
    CHECK(c.upper[3] == doctest::Approx(32.0));
    CHECK_THROWS_AS(fit_quantile_boundaries({1, 2, 3, 4}), PreconditionError);
    CHECK(boundaries_from_json(to_json(b)) == b);
}

TEST_CASE("judge verdict parsing") {
    using C = CorrectnessLabel;
    CHECK(parse_judge_verdict("thinking\n\nCorrect.", C::correct).correctness == C::correct);
    CHECK(parse_judge_verdict("na", C::correct).correctness == C::na);
    auto same = parse_judge_verdict("incorrect, same error", C::incorrect);
    CHECK(same.correctness == C::incorrect);
    CHECK(same.same_error == true);
    CHECK(parse_judge_verdict("Incorrect, different error", C::incorrect).same_error == false);
    CHECK_FALSE(parse_judge_verdict("incorrect", C::correct).same_error.has_value());
    CHECK(parse_judge_verdict("<think>incorrect, same error</think>\ncorrect", C::incorrect).correctness == C::correct);
    CHECK_THROWS_AS(parse_judge_verdict("incorrect", C::incorrect), ParseError);
    CHECK_THROWS_AS(parse_judge_verdict("incorrect, same error", C::correct), ParseError);
    CHECK_THROWS_AS(parse_judge_verdict("correct, same error", C::incorrect), ParseError);
    CHECK_THROWS_AS(parse_judge_verdict("probably fine", C::correct), ParseError);
    CHECK_THROWS_AS(parse_judge_verdict("  \n", C::correct), ParseError);
}

TEST_CASE("correctness and error similarity applicability") {
    using C = CorrectnessLabel;
    CHECK_FALSE(correctness_similarity(C::na, C::correct).has_value());
    CHECK(correctness_similarity(C::correct, C::correct) == 1.0);
    CHECK(correctness_similarity(C::incorrect, C::na) == 0.0);
    CHECK_FALSE(error_similarity(C::correct, C::incorrect, true).has_value());
    CHECK(error_similarity(C::incorrect, C::correct, std::nullopt) == 0.0);
    CHECK(error_similarity(C::incorrect, C::incorrect, true) == 1.0);
    CHECK(error_similarity(C::incorrect, C::incorrect, false) == 0.0);
}

TEST_CASE("cosine similarity is clamped but the raw value is kept") {
    std::vector<double> a{1, 0}, b{-1, 0}, c{1, 1};
    CHECK(cosine_similarity(a, b) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(a, c) == doctest::Approx(std::sqrt(0.5)));
    CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{1, 2, 3}), PreconditionError);
    Embedder e(std::make_shared<HashEmbeddingBackend>(32));
    auto same = embedding_cosine("I think it is 5/6", "I think it is 5/6", e);
    CHECK(same.value == doctest::Approx(1.0));
    CHECK(same.raw == doctest::Approx(1.0));
}

TEST_CASE("inverse perplexity") {
    std::vector<double> lp(7, std::log(0.2));
    CHECK(tutor_response_likelihood(lp) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(tutor_response_likelihood(std::vector<double>{0.0}) == 1.0);
    CHECK_THROWS_AS(tutor_response_likelihood(std::vector<double>{}), PreconditionError);
    CHECK_THROWS_AS(tutor_response_likelihood(std::vector<double>{0.1}), PreconditionError);

    auto d = testing::make_dialogue("t", 2);
    auto slot = slot_at(d, 3);
    auto ctx = tutor_context(d, slot, "CANDIDATE", 2);
    CHECK(ctx.rfind(std::string(prompts::kTutor), 0) == 0);
    CHECK(ctx.find("Student: CANDIDATE\n") != std::string::npos);
    CHECK(ctx.find(d.turns[3].text) == std::string::npos);
    CHECK(ctx.substr(ctx.size() - 7) == "Tutor: ");
    Scorer s(make_uniform_scoring(0.2), "u");
    CHECK(score_tutor_response(d, slot, "x", d.turns[4], 2, s) == doctest::Approx(0.2));
}

TEST_CASE("KT prompt carries question, prefix, KC and optional persona") {
    auto d = testing::make_dialogue("k", 2);
    OceanPersona p;
    auto with = kt_request(d.question, std::span<const Turn>(d.turns).first(2), "Adding fractions", &p);
    const auto& u = with.messages.at(0).content;
    CHECK(with.system_prompt == prompts::kKnowledgeTracing);
    CHECK(u.find("Correct Answer: B") != std::string::npos);
    CHECK(u.find("Knowledge component: Adding fractions") != std::string::npos);
    CHECK(u.find("Student persona:") != std::string::npos);
    CHECK(with.decoding.max_tokens == 1);
    auto without = kt_request(d.question, {}, "Default", nullptr);
    CHECK(without.messages.at(0).content.find("Student persona:") == std::string::npos);
}

TEST_CASE("knowledge baseline uses the previous student turn and annotated next tutor turn") {
    Harness h;
    auto slot = slot_at(h.d, 5);
    auto b = knowledge_baseline(h.d, slot, &h.a, {}, *h.kt, true);
    REQUIRE(b.applicable);
    CHECK(b.kcs == h.d.subjects);
    CHECK(b.prev.turn_index == 3);
    for (const auto& [k, v] : b.gt_delta) CHECK(std::isfinite(v));

    auto first = knowledge_baseline(h.d, slot_at(h.d, 1), &h.a, {}, *h.kt, true);
    CHECK(first.prev.turn_index == -1);

    h.a.kcs.erase(6);
    auto none = knowledge_baseline(h.d, slot, &h.a, {}, *h.kt, true);
    CHECK_FALSE(none.applicable);
    CHECK(none.reason == "next tutor turn has no KCs");

    MetricEligibility no_kc;
    no_kc.knowledge = false;
    CHECK_FALSE(knowledge_baseline(h.d, slot_at(h.d, 3), &h.a, no_kc, *h.kt, true).applicable);
}

TEST_CASE("evaluate_turn scores every metric and records labels") {
    Harness h;
    auto slot = slot_at(h.d, 5);
    QuantileBoundaries b;
    b.upper = {-0.05, 0.0, 0.05, 0.1};
    auto r = evaluate_turn(h.d, slot, h.cand(5, h.d.turns[5].text), &h.a, {}, h.backends(), &b);
    CHECK(r.failures.empty());
    CHECK(r.at(Metric::acts).value == 1.0);
    CHECK(r.at(Metric::correctness).value == 1.0);
    CHECK_FALSE(r.at(Metric::errors).applicable());
    CHECK(r.at(Metric::knowledge).value == 1.0);
    CHECK(r.at(Metric::cos_sim).value == doctest::Approx(1.0));
    CHECK(r.at(Metric::rouge_l).value == 1.0);
    CHECK(r.at(Metric::tutor_resp).value == doctest::Approx(0.2));
    CHECK(r.labels.act == ActLabel::MathAnswer);
    CHECK(r.pair_index == 3);
    CHECK(r.student_ordinal == 2);
    CHECK(report_from_json(to_json(r)) == r);
}

TEST_CASE("errors apply only to incorrect ground truth and the judge is skipped for na") {
    Harness h;
    h.a.correctness[3] = CorrectnessLabel::incorrect;
    h.verdict = "incorrect, same error";
    auto r = evaluate_turn(h.d, slot_at(h.d, 3), h.cand(3, "it is 2/5"), &h.a, {}, h.backends(), nullptr);
    CHECK(r.at(Metric::errors).value == 1.0);
    CHECK(r.at(Metric::correctness).value == 1.0);
    CHECK(r.labels.same_error == true);
    CHECK(r.at(Metric::knowledge).reason == "no quantile boundaries");

    h.a.correctness[3] = CorrectnessLabel::na;
    const int before = h.judge_calls;
    auto na = evaluate_turn(h.d, slot_at(h.d, 3), h.cand(3, "hm"), &h.a, {}, h.backends(), nullptr);
    CHECK(h.judge_calls == before);
    CHECK_FALSE(na.at(Metric::correctness).applicable());
    CHECK_FALSE(na.at(Metric::errors).applicable());
}

TEST_CASE("per-metric failures are recorded without aborting") {
    Harness h;
    h.verdict = "maybe";
    h.act = "Yelling";
    auto r = evaluate_turn(h.d, slot_at(h.d, 3), h.cand(3, "x"), &h.a, {}, h.backends(), nullptr);
    CHECK_FALSE(r.at(Metric::acts).applicable());
    CHECK_FALSE(r.at(Metric::correctness).applicable());
    CHECK(r.failures.size() == 2);
    CHECK(r.at(Metric::rouge_l).applicable());
    CHECK(r.at(Metric::tutor_resp).applicable());

    auto d2 = h.d;
    d2.turns.pop_back();
    auto r2 = evaluate_turn(d2, slot_at(d2, 7), h.cand(7, "x"), &h.a, {}, h.backends(), nullptr);
    CHECK(r2.at(Metric::tutor_resp).reason == "no next tutor turn");
    CHECK_FALSE(r2.at(Metric::knowledge).applicable());

    CHECK_THROWS_AS(evaluate_turn(h.d, slot_at(h.d, 3), h.cand(5, "x"), &h.a, {}, h.backends(), nullptr),
                    PreconditionError);
}

TEST_CASE("evaluate_batch fits boundaries on ground-truth deltas unless preset") {
    Harness h;
    Corpus c;
    c.dialogues.push_back(h.d);
    auto d2 = testing::make_dialogue("h2", 4);
    for (auto& t : d2.turns)
        if (t.speaker == Speaker::student) t.text += " so 5/6 5/6";
    c.dialogues.push_back(d2);
    c.annotations[h.d.id] = h.a;
    auto a2 = h.a;
    c.annotations[d2.id] = a2;

    std::vector<CandidateTurn> cands;
    for (const auto& d : c.dialogues)
        for (const auto& s : student_turn_slots(d)) {
            auto x = h.cand(s.turn_index, "maybe 5/6");
            x.dialogue_id = d.id;
            cands.push_back(x);
        }
    auto be = h.backends();
    auto r = evaluate_batch(c, cands, be);
    REQUIRE(r.boundaries.has_value());
    CHECK(r.boundaries->fit_count == 2 * 4 * h.d.subjects.size());
    CHECK(r.reports.size() == cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        CHECK(r.reports[i].dialogue_id == cands[i].dialogue_id);
        CHECK(r.reports[i].turn_index == cands[i].turn_index);
    }

    QuantileBoundaries preset;
    preset.upper = {-1, -0.5, 0.5, 1};
    auto p = evaluate_batch(c, cands, be, {}, preset);
    CHECK(p.boundaries == preset);

    EvalOptions serial;
    serial.workers = 1;
    CHECK(evaluate_batch(c, cands, be, serial).reports == r.reports);

    auto bad = cands;
    bad[0].dialogue_id = "ghost";
    CHECK_THROWS_AS(evaluate_batch(c, bad, be), PreconditionError);
}

TEST_CASE("too few deltas leave knowledge inapplicable with a reason") {
    Harness h;
    Corpus c;
    auto d = testing::make_dialogue("tiny", 1);
    d.subjects = {"Default"};
    c.dialogues.push_back(d);
    auto& a = c.annotations_mut("tiny");
    a.kcs[2] = {"Default"};
    std::vector<CandidateTurn> cands{h.cand(1, "x")};
    cands[0].dialogue_id = "tiny";
    auto r = evaluate_batch(c, cands, h.backends());
    CHECK_FALSE(r.boundaries.has_value());
    CHECK(r.reports[0].at(Metric::knowledge).reason == "too few ground-truth deltas to fit quantiles");
}

TEST_CASE("reports round-trip through JSONL") {
    testing::TempDir dir("reports");
    MetricReport r;
    r.dialogue_id = "d";
    r.turn_index = 3;
    r.system = "dpo";
    r.at(Metric::rouge_l).value = 0.25;
    r.at(Metric::errors).reason = "ground truth is not incorrect";
    r.labels.correctness = CorrectnessLabel::incorrect;
    r.labels.same_error = false;
    r.failures = {"acts: boom"};
    write_reports(dir / "r.jsonl", {r, r});
    auto back = read_reports(dir / "r.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0] == r);
}
