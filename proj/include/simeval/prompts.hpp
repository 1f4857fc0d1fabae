#pragma once

// Prompt templates (versioned text assets) and the renderers that turn dialogues into prompt text.

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "simeval/core.hpp"
#include "simeval/corpus.hpp"

namespace simeval::prompts {

inline constexpr int kTemplateVersion = 1;

// Annotation
extern const std::string_view kActs;
extern const std::string_view kCorrectness;
extern const std::string_view kKnowledgeComponents;
extern const std::string_view kSolution;
extern const std::string_view kOcean;
extern const std::string_view kSummary;

// Evaluation models
extern const std::string_view kActClassifier;
extern const std::string_view kCorrectnessClassifier;
extern const std::string_view kTutor;
extern const std::string_view kJudge;
extern const std::string_view kKnowledgeTracing;

// Student models
extern const std::string_view kStudentFineTuned;
extern const std::string_view kZeroShot;
extern const std::string_view kOceanStudent;
extern const std::string_view kOracleStudent;
extern const std::string_view kIclStudent;
extern const std::string_view kReasoningStudent;

inline constexpr std::string_view kEndOfDialogue = "<end_of_dialogue>";

/// "Question: ...\nA: ...\n...\nCorrect Answer: X" (answer line only when correct_option is given).
std::string render_question(const Question& q, std::optional<int> correct_option);

/// "turn <i> - Tutor: ..." lines keyed by global turn index.
std::string render_indexed_turns(std::span<const Turn> turns);

/// "Tutor: ...\nStudent: ..." lines without indices.
std::string render_plain_turns(std::span<const Turn> turns);

/// User message for the dialogue-level annotation prompts.
std::string annotation_user_message(const Dialogue& d, std::optional<int> correct_option);

/// User message for KC annotation: dialogue plus the list of candidate KCs.
std::string kc_user_message(const Dialogue& d, std::optional<int> correct_option);

std::string render_persona(const OceanPersona& p);

}  // namespace simeval::prompts
