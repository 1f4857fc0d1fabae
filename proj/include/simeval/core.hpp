#pragma once

// Dialogue formalism and shared label vocabularies.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace simeval {

enum class Speaker { tutor, student };
enum class Split { train, validation, test };

enum class ActLabel { MathAnswer, SeekInformation, NotUnderstanding, Acknowledge, OffTopic };
inline constexpr std::array<ActLabel, 5> kAllActs = {
    ActLabel::MathAnswer, ActLabel::SeekInformation, ActLabel::NotUnderstanding,
    ActLabel::Acknowledge, ActLabel::OffTopic};

enum class CorrectnessLabel { correct, incorrect, na };
inline constexpr std::array<CorrectnessLabel, 3> kAllCorrectness = {
    CorrectnessLabel::correct, CorrectnessLabel::incorrect, CorrectnessLabel::na};

enum class TraitLevel { low, neutral, high };
enum class OceanTrait { Openness, Conscientiousness, Extraversion, Agreeableness, Neuroticism };
inline constexpr std::array<OceanTrait, 5> kAllTraits = {
    OceanTrait::Openness, OceanTrait::Conscientiousness, OceanTrait::Extraversion,
    OceanTrait::Agreeableness, OceanTrait::Neuroticism};

enum class SimMethod { sft_backend, zero_shot, ocean, oracle, icl, reasoning, external };

// Canonical string forms. from_string variants throw ParseError naming the offending string.
std::string_view to_string(Speaker s);
std::string_view to_string(Split s);
std::string_view to_string(ActLabel a);
std::string_view to_string(CorrectnessLabel c);
std::string_view to_string(TraitLevel t);
std::string_view to_string(OceanTrait t);
std::string_view to_string(SimMethod m);

Speaker speaker_from_string(std::string_view s);
Split split_from_string(std::string_view s);
ActLabel act_from_string(std::string_view s);
CorrectnessLabel correctness_from_string(std::string_view s);
TraitLevel trait_level_from_string(std::string_view s);
SimMethod method_from_string(std::string_view s);

inline constexpr std::string_view kDefaultKc = "Default";

struct Question {
    std::string stem;
    std::array<std::string, 4> options;
    std::optional<int> correct_option;  // 1..4
    std::optional<bool> solvable;

    bool operator==(const Question&) const = default;
};

struct Turn {
    int index = 0;
    Speaker speaker = Speaker::tutor;
    std::string text;

    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    std::string id;
    Question question;
    std::vector<Turn> turns;
    Split split = Split::train;
    std::vector<std::string> subjects;

    bool operator==(const Dialogue&) const = default;
};

struct OceanPersona {
    std::array<TraitLevel, 5> levels{TraitLevel::neutral, TraitLevel::neutral, TraitLevel::neutral,
                                     TraitLevel::neutral, TraitLevel::neutral};
    std::string reasoning;

    TraitLevel level(OceanTrait t) const { return levels[static_cast<std::size_t>(t)]; }
    void set(OceanTrait t, TraitLevel l) { levels[static_cast<std::size_t>(t)] = l; }
    bool operator==(const OceanPersona&) const = default;
};

struct CandidateTurn {
    std::string dialogue_id;
    int turn_index = 0;
    std::string text;
    SimMethod method = SimMethod::external;
    int sample_id = 0;
    // Free-form system name ("dpo_8b"); groups reports when several systems share a method.
    std::string system;
    bool ended_dialogue = false;

    std::string group_key() const;
    bool operator==(const CandidateTurn&) const = default;
};

struct Violation {
    std::vector<int> turn_indices;
    std::string message;
};

struct ValidationResult {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::string summary() const;
};

ValidationResult validate_dialogue(const Dialogue& d);

/// Throws PreconditionError carrying the violation summary when d is invalid.
void require_valid(const Dialogue& d);

/// Merges consecutive same-speaker turns (joined by '\n') and renumbers from 0.
std::vector<Turn> merge_bursts(std::vector<Turn> turns);

/// Number of adjacent (tutor, student) pairs.
int turn_pair_count(const Dialogue& d);

struct StudentSlot {
    int turn_index = 0;
    int pair_index = 0;       // number of tutor turns before the slot (s_0 -> 0, s_i -> i)
    int student_ordinal = 0;  // number of student turns before the slot
    std::span<const Turn> prefix;
};

std::vector<StudentSlot> student_turn_slots(const Dialogue& d);

/// Slot for the student turn at turn_index; throws PreconditionError if it is not a student turn.
StudentSlot slot_at(const Dialogue& d, int turn_index);

/// The tutor turn immediately following turn_index, if any.
const Turn* next_tutor_turn(const Dialogue& d, int turn_index);

std::string trim(std::string_view s);

}  // namespace simeval
