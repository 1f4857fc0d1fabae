#include <doctest.h>

#include "simeval/annotate.hpp"
#include "simeval/error.hpp"
#include "simeval/mock.hpp"
#include "simeval/prompts.hpp"
#include "support.hpp"

using namespace simeval;

namespace {

std::shared_ptr<ChatClient> scripted(std::string reply) {
    auto backend = std::make_shared<MockChatBackend>([reply](const ChatRequest&) { return reply; });
    return std::make_shared<ChatClient>(backend, ChatClient::Options{});
}

}  // namespace

TEST_CASE("parse_model_json repairs fences, prose and trailing commas") {
    CHECK(parse_model_json(R"({"a": 1})")["a"] == 1);
    CHECK(parse_model_json("```json\n{\"a\": 2,}\n```")["a"] == 2);
    CHECK(parse_model_json("Here you go: {\"a\": [1, 2,], } thanks")["a"].size() == 2);
    CHECK_THROWS_AS(parse_model_json("no json here"), ParseError);
}

TEST_CASE("OutputCleaner strips think blocks and a custom pattern") {
    OutputCleaner c;
    CHECK(c("<think>hmm\n</think>{\"x\":1}") == "{\"x\":1}");
    c.strip_regex = "<\\|.*?\\|>";
    CHECK(c("<|eot|>text") == "text");
}

TEST_CASE("acts parser requires every student turn and valid labels") {
    auto d = testing::make_dialogue("a", 2);
    auto acts = parse_acts(d, R"({"turn 1": {"act": "Math Answer"}, "turn 3": {"act": "Acknowledge"}})");
    CHECK(acts.at(1) == ActLabel::MathAnswer);
    CHECK(acts.at(3) == ActLabel::Acknowledge);
    CHECK_THROWS_AS(parse_acts(d, R"({"turn 1": {"act": "Math Answer"}})"), ParseError);
    CHECK_THROWS_AS(parse_acts(d, R"({"turn 1": {"act": "Shouting"}, "turn 3": {"act": "Acknowledge"}})"),
                    ParseError);
    CHECK_THROWS_AS(parse_acts(d, R"({"turn 0": {"act": "Math Answer"}, "turn 1": {"act": "Math Answer"},
                                      "turn 3": {"act": "Math Answer"}})"),
                    ParseError);
    CHECK(parse_act_for_turn(R"({"turn 3": {"act": "Off-Topic"}})", 3) == ActLabel::OffTopic);
}

TEST_CASE("correctness parser maps true/false/null") {
    auto d = testing::make_dialogue("c", 2);
    auto c = parse_correctness(d, R"({"turn 1": {"correct": true}, "turn 3": {"correct": null}})");
    CHECK(c.at(1) == CorrectnessLabel::correct);
    CHECK(c.at(3) == CorrectnessLabel::na);
    CHECK(parse_correctness(d, R"({"turn 1": {"correct": false}, "turn 3": {"correct": false}})").at(1) ==
          CorrectnessLabel::incorrect);
    CHECK_THROWS_AS(parse_correctness(d, R"({"turn 1": {"correct": "yes"}, "turn 3": {"correct": null}})"),
                    ParseError);
}

TEST_CASE("KC parser restricts names to the dialogue subjects") {
    auto d = testing::make_dialogue("k", 2);
    auto k = parse_kcs(d, R"({"turn 0": {"kcs": ["Adding fractions"]}, "turn 2": {"kcs": ["Default"]}})");
    CHECK(k.at(0).contains("Adding fractions"));
    CHECK_THROWS_AS(parse_kcs(d, R"({"turn 0": {"kcs": ["Calculus"]}})"), ParseError);
    CHECK_THROWS_AS(parse_kcs(d, R"({"turn 1": {"kcs": ["Default"]}})"), ParseError);
}

TEST_CASE("solution, persona and summary parsers") {
    auto s = parse_solution(R"({"solution": "5/6", "solvable": true, "correct_option": 2,
        "option_1_explanation": "a", "option_2_explanation": "b", "option_3_explanation": "c",
        "option_4_explanation": "d"})");
    CHECK(s.correct_option == 2);
    CHECK(s.option_explanations[3] == "d");
    CHECK_THROWS_AS(parse_solution(R"({"solution": "", "solvable": true, "correct_option": 7,
        "option_1_explanation": "a", "option_2_explanation": "b", "option_3_explanation": "c",
        "option_4_explanation": "d"})"),
                    ParseError);

    auto p = parse_persona(R"({"reasoning": "r", "Openness": "high", "Conscientiousness": "low",
        "Extraversion": "neutral", "Agreeableness": "neutral", "Neuroticism": "high"})");
    CHECK(p.level(OceanTrait::Openness) == TraitLevel::high);
    CHECK(p.level(OceanTrait::Conscientiousness) == TraitLevel::low);
    CHECK_THROWS_AS(parse_persona(R"({"Openness": "high"})"), ParseError);

    CHECK(parse_summary("  shy but careful \n") == "shy but careful");
    CHECK_THROWS_AS(parse_summary("   "), ParseError);
}

TEST_CASE("annotation requests show the known answer except for the solution prompt") {
    auto d = testing::make_dialogue("r", 2);
    AnnotationSet none;
    auto acts = annotation_request(AnnotationKind::acts, d, none);
    CHECK(acts.system_prompt == prompts::kActs);
    CHECK(acts.decoding.greedy);
    CHECK(acts.messages.at(0).content.find("Correct Answer: B") != std::string::npos);
    auto sol = annotation_request(AnnotationKind::solution, d, none);
    CHECK(sol.messages.at(0).content.find("Correct Answer") == std::string::npos);
}

TEST_CASE("annotate_one flags parse failures instead of throwing") {
    auto d = testing::make_dialogue("f", 2);
    AnnotationSet set;
    auto job = annotate_one(AnnotationKind::acts, d, set, *scripted("not json"));
    CHECK_FALSE(job.ok);
    CHECK(set.failed(FailureFlag::acts_failed));
    CHECK_FALSE(job.error.empty());

    auto ok = annotate_one(AnnotationKind::correctness, d, set,
                           *scripted(R"({"turn 1": {"correct": true}, "turn 3": {"correct": false}})"));
    CHECK(ok.ok);
    CHECK(set.correctness.at(3) == CorrectnessLabel::incorrect);
    CHECK_THROWS_AS(annotate_acts(d, *scripted("nope")), ParseError);
}

TEST_CASE("heuristic mock annotates the fixture corpus deterministically") {
    auto c1 = load_corpus(testing::fixture("dialogues.jsonl")).corpus;
    auto c2 = c1;
    ChatClient chat(make_heuristic_chat(), {});
    std::vector<AnnotationKind> kinds(kAllAnnotationKinds.begin(), kAllAnnotationKinds.end());
    auto jobs1 = annotate_corpus(c1, kinds, chat, 3);
    auto jobs2 = annotate_corpus(c2, kinds, chat, 1);
    CHECK(jobs1.size() == c1.dialogues.size() * kinds.size());
    for (const auto& j : jobs1) CHECK_MESSAGE(j.ok, j.error);
    CHECK(c1.annotations == c2.annotations);
    for (const auto& d : c1.dialogues) {
        const auto& a = *c1.annotations_for(d.id);
        CHECK(check_annotations(d, a).empty());
        CHECK(a.persona.has_value());
        CHECK(a.solution.has_value());
    }
}
