#include <doctest.h>

#include "simeval/core.hpp"
#include "simeval/corpus.hpp"
#include "simeval/error.hpp"
#include "simeval/json_io.hpp"
#include "support.hpp"

using namespace simeval;

TEST_CASE("label vocabularies round-trip through their string forms") {
    for (auto a : kAllActs) CHECK(act_from_string(to_string(a)) == a);
    for (auto c : kAllCorrectness) CHECK(correctness_from_string(to_string(c)) == c);
    for (auto m : {SimMethod::sft_backend, SimMethod::zero_shot, SimMethod::ocean, SimMethod::oracle,
                   SimMethod::icl, SimMethod::reasoning, SimMethod::external})
        CHECK(method_from_string(to_string(m)) == m);
    CHECK(to_string(ActLabel::MathAnswer) == "Math Answer");
    CHECK_THROWS_AS(act_from_string("Gibberish"), ParseError);
    CHECK_THROWS_AS(correctness_from_string("maybe"), ParseError);
}

TEST_CASE("validate_dialogue reports structural violations") {
    auto d = testing::make_dialogue("v", 3);
    CHECK(validate_dialogue(d).ok());

    auto twice = d;
    twice.turns[1].speaker = Speaker::tutor;
    auto r = validate_dialogue(twice);
    REQUIRE_FALSE(r.ok());
    CHECK(r.summary().find("consecutive tutor turns") != std::string::npos);

    auto gap = d;
    gap.turns[3].index = 7;
    CHECK_FALSE(validate_dialogue(gap).ok());

    auto blank = d;
    blank.turns[1].text = "   ";
    CHECK_FALSE(validate_dialogue(blank).ok());

    auto no_default = d;
    no_default.subjects = {"Adding fractions"};
    CHECK_FALSE(validate_dialogue(no_default).ok());

    auto two_default = d;
    two_default.subjects.push_back("Default");
    CHECK_FALSE(validate_dialogue(two_default).ok());

    CHECK_THROWS_AS(require_valid(twice), PreconditionError);
}

TEST_CASE("merge_bursts joins same-speaker runs and renumbers") {
    std::vector<Turn> t{{0, Speaker::tutor, "a"}, {1, Speaker::tutor, "b"}, {2, Speaker::student, "c"},
                        {3, Speaker::student, "d"}, {4, Speaker::tutor, "e"}};
    auto m = merge_bursts(t);
    REQUIRE(m.size() == 3);
    CHECK(m[0].text == "a\nb");
    CHECK(m[1].text == "c\nd");
    CHECK(m[2].index == 2);
}

TEST_CASE("student slots carry pair index and ordinal") {
    auto d = testing::make_dialogue("s", 4);
    auto slots = student_turn_slots(d);
    REQUIRE(slots.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(slots[i].turn_index == 2 * i + 1);
        CHECK(slots[i].pair_index == i + 1);
        CHECK(slots[i].student_ordinal == i);
        CHECK(slots[i].prefix.size() == static_cast<std::size_t>(2 * i + 1));
    }
    CHECK(turn_pair_count(d) == 4);

    auto s = testing::make_dialogue("s0", 2, true);
    auto ss = student_turn_slots(s);
    CHECK(ss[0].pair_index == 0);
    CHECK(ss[0].prefix.empty());
    CHECK(ss[1].pair_index == 1);
    CHECK(turn_pair_count(s) == 2);

    CHECK(slot_at(d, 3).student_ordinal == 1);
    CHECK_THROWS_AS(slot_at(d, 2), PreconditionError);
    REQUIRE(next_tutor_turn(d, 3) != nullptr);
    CHECK(next_tutor_turn(d, 3)->index == 4);
    CHECK(next_tutor_turn(d, static_cast<int>(d.turns.size()) - 1) == nullptr);
}

TEST_CASE("load_corpus rejects bad records with line numbers and keeps the rest") {
    testing::TempDir dir("corpus");
    auto good = dump_line(to_json(testing::make_dialogue("ok-1", 2)));
    auto dup = good;
    auto bad_struct = to_json(testing::make_dialogue("bad", 2));
    bad_struct["subjects"] = json::array({"x"});
    std::string text = good + "\n{not json\n\n" + dump_line(bad_struct) + "\n" + dup + "\n";
    testing::spit(dir / "c.jsonl", text);

    auto r = load_corpus(dir / "c.jsonl");
    CHECK(r.corpus.dialogues.size() == 1);
    REQUIRE(r.rejected.size() == 3);
    CHECK(r.rejected[0].line == 2);
    CHECK(r.rejected[1].line == 4);
    CHECK(r.rejected[1].dialogue_id == "bad");
    CHECK(r.rejected[2].reason == "duplicate dialogue id");
    CHECK_THROWS_AS(load_corpus(dir / "missing.jsonl"), IoError);
}

TEST_CASE("load_corpus merges bursts before validating") {
    testing::TempDir dir("burst");
    auto j = to_json(testing::make_dialogue("b", 2));
    j["turns"].insert(j["turns"].begin() + 1, json{{"index", 1}, {"speaker", "tutor"}, {"text", "and more"}});
    for (std::size_t i = 0; i < j["turns"].size(); ++i) j["turns"][i]["index"] = i;
    testing::spit(dir / "c.jsonl", dump_line(j) + "\n");
    auto r = load_corpus(dir / "c.jsonl");
    REQUIRE(r.rejected.empty());
    CHECK(r.corpus.dialogues[0].turns[0].text.find("\nand more") != std::string::npos);
}

TEST_CASE("fixture corpus loads cleanly") {
    auto r = load_corpus(testing::fixture("dialogues.jsonl"));
    CHECK(r.rejected.empty());
    CHECK(r.corpus.dialogues.size() == 5);
    auto s = corpus_stats(r.corpus);
    CHECK(s.dialogues == 5);
    CHECK(s.tutor_initiated_pct == doctest::Approx(80.0));
    CHECK(s.unique_subjects > 0);
}

TEST_CASE("annotation cache round-trips and later records win") {
    testing::TempDir dir("ann");
    Corpus c;
    c.dialogues.push_back(testing::make_dialogue("a", 3));
    auto& a = c.annotations_mut("a");
    a.acts[1] = ActLabel::MathAnswer;
    a.acts[3] = ActLabel::SeekInformation;
    a.correctness[1] = CorrectnessLabel::incorrect;
    a.correctness[3] = CorrectnessLabel::na;
    a.kcs[2] = {"Adding fractions"};
    a.oracle_summary = "tries hard";
    a.solution = SolutionRecord{"add", true, 2, {"x", "y", "z", "w"}};
    a.failure_flags.insert(FailureFlag::kcs_failed);
    CHECK(check_annotations(c.dialogues[0], a).empty());

    save_annotations(c.annotations, dir / "a.jsonl");
    auto back = load_annotations(dir / "a.jsonl");
    REQUIRE(back.contains("a"));
    CHECK(back.at("a") == a);

    CHECK_THROWS_AS(c.annotations_mut("nope"), PreconditionError);
    auto bad = a;
    bad.acts[2] = ActLabel::Acknowledge;
    CHECK_FALSE(check_annotations(c.dialogues[0], bad).empty());

    EligibilityView view(c);
    auto e = view("a");
    CHECK(e.acts);
    CHECK_FALSE(e.knowledge);
    CHECK(view("other").knowledge);
}

TEST_CASE("train/validation split is seeded and sized") {
    Corpus c;
    for (int i = 0; i < 20; ++i) {
        auto d = testing::make_dialogue("d" + std::to_string(i), 2);
        d.split = Split::train;
        c.dialogues.push_back(d);
    }
    SplitRequest req;
    req.validation_count = 5;
    auto a = split_train_validation(c, req);
    auto b = split_train_validation(c, req);
    CHECK(a.validation.dialogues.size() == 5);
    CHECK(a.train.dialogues.size() == 15);
    for (std::size_t i = 0; i < 5; ++i) CHECK(a.validation.dialogues[i].id == b.validation.dialogues[i].id);

    auto reversed = c;
    std::reverse(reversed.dialogues.begin(), reversed.dialogues.end());
    auto r = split_train_validation(reversed, req);
    std::set<std::string> x, y;
    for (const auto& d : a.validation.dialogues) x.insert(d.id);
    for (const auto& d : r.validation.dialogues) y.insert(d.id);
    CHECK(x == y);

    std::set<std::string> all, tr, va;
    for (const auto& d : c.dialogues) all.insert(d.id);
    for (const auto& d : a.train.dialogues) tr.insert(d.id);
    for (const auto& d : a.validation.dialogues) va.insert(d.id);
    std::set<std::string> both;
    std::set_intersection(tr.begin(), tr.end(), va.begin(), va.end(), std::inserter(both, both.end()));
    CHECK(both.empty());
    tr.insert(va.begin(), va.end());
    CHECK(tr == all);
    for (const auto& d : a.validation.dialogues) CHECK(d.split == Split::validation);

    req.validation_count = 50;
    CHECK_THROWS_AS(split_train_validation(c, req), PreconditionError);
    c.dialogues[0].split = Split::test;
    req.validation_count = 1;
    CHECK_THROWS_AS(split_train_validation(c, req), PreconditionError);
}

TEST_CASE("filter_unsolvable drops flagged dialogues") {
    Corpus c;
    c.dialogues.push_back(testing::make_dialogue("keep", 2));
    c.dialogues.push_back(testing::make_dialogue("drop", 2));
    CHECK_THROWS_AS(filter_unsolvable(c), PreconditionError);
    c.annotations_mut("keep").solution = SolutionRecord{"", true, 1, {}};
    c.annotations_mut("drop").solution = SolutionRecord{"", false, 1, {}};
    auto r = filter_unsolvable(c);
    CHECK(r.corpus.dialogues.size() == 1);
    CHECK(r.removed_ids == std::vector<std::string>{"drop"});
    auto again = filter_unsolvable(r.corpus);
    CHECK(again.removed_ids.empty());
    CHECK(again.corpus.dialogues == r.corpus.dialogues);
}

TEST_CASE("load, save, load is a fixed point") {
    testing::TempDir dir("roundtrip");
    auto first = load_corpus(testing::fixture("dialogues.jsonl")).corpus;
    save_corpus(first, dir / "a.jsonl");
    auto second = load_corpus(dir / "a.jsonl").corpus;
    CHECK(second.dialogues == first.dialogues);
    save_corpus(second, dir / "b.jsonl");
    CHECK(testing::slurp(dir / "a.jsonl") == testing::slurp(dir / "b.jsonl"));
}

TEST_CASE("validate_dialogue is idempotent and slots match student turns") {
    for (bool student_first : {false, true}) {
        auto d = testing::make_dialogue("v", 4, student_first);
        const auto copy = d;
        const auto r1 = validate_dialogue(d);
        const auto r2 = validate_dialogue(d);
        CHECK(r1.ok() == r2.ok());
        CHECK(r1.violations.size() == r2.violations.size());
        CHECK(d == copy);
        const auto students = std::count_if(d.turns.begin(), d.turns.end(),
                                            [](const Turn& t) { return t.speaker == Speaker::student; });
        CHECK(student_turn_slots(d).size() == static_cast<std::size_t>(students));
    }
}
