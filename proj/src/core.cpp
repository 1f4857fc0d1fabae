#include "simeval/core.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "simeval/error.hpp"

namespace simeval {

namespace {

template <typename Enum, std::size_t N>
Enum lookup(std::string_view s, const std::array<std::pair<Enum, std::string_view>, N>& table,
            std::string_view what) {
    for (const auto& [value, name] : table)
        if (name == s) return value;
    throw ParseError("unknown " + std::string(what) + " \"" + std::string(s) + "\"");
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum e, const std::array<std::pair<Enum, std::string_view>, N>& table) {
    for (const auto& [value, name] : table)
        if (value == e) return name;
    return "?";
}

constexpr std::array<std::pair<Speaker, std::string_view>, 2> kSpeakers{{
    {Speaker::tutor, "tutor"},
    {Speaker::student, "student"},
}};

constexpr std::array<std::pair<Split, std::string_view>, 3> kSplits{{
    {Split::train, "train"},
    {Split::validation, "validation"},
    {Split::test, "test"},
}};

constexpr std::array<std::pair<ActLabel, std::string_view>, 5> kActs{{
    {ActLabel::MathAnswer, "Math Answer"},
    {ActLabel::SeekInformation, "Seek Information"},
    {ActLabel::NotUnderstanding, "Not Understanding"},
    {ActLabel::Acknowledge, "Acknowledge"},
    {ActLabel::OffTopic, "Off-Topic"},
}};

constexpr std::array<std::pair<CorrectnessLabel, std::string_view>, 3> kCorrectness{{
    {CorrectnessLabel::correct, "correct"},
    {CorrectnessLabel::incorrect, "incorrect"},
    {CorrectnessLabel::na, "na"},
}};

constexpr std::array<std::pair<TraitLevel, std::string_view>, 3> kLevels{{
    {TraitLevel::low, "low"},
    {TraitLevel::neutral, "neutral"},
    {TraitLevel::high, "high"},
}};

constexpr std::array<std::pair<OceanTrait, std::string_view>, 5> kTraits{{
    {OceanTrait::Openness, "Openness"},
    {OceanTrait::Conscientiousness, "Conscientiousness"},
    {OceanTrait::Extraversion, "Extraversion"},
    {OceanTrait::Agreeableness, "Agreeableness"},
    {OceanTrait::Neuroticism, "Neuroticism"},
}};

constexpr std::array<std::pair<SimMethod, std::string_view>, 7> kMethods{{
    {SimMethod::sft_backend, "sft_backend"},
    {SimMethod::zero_shot, "zero_shot"},
    {SimMethod::ocean, "ocean"},
    {SimMethod::oracle, "oracle"},
    {SimMethod::icl, "icl"},
    {SimMethod::reasoning, "reasoning"},
    {SimMethod::external, "external"},
}};

std::string join_indices(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

std::string_view to_string(Speaker s) { return name_of(s, kSpeakers); }
std::string_view to_string(Split s) { return name_of(s, kSplits); }
std::string_view to_string(ActLabel a) { return name_of(a, kActs); }
std::string_view to_string(CorrectnessLabel c) { return name_of(c, kCorrectness); }
std::string_view to_string(TraitLevel t) { return name_of(t, kLevels); }
std::string_view to_string(OceanTrait t) { return name_of(t, kTraits); }
std::string_view to_string(SimMethod m) { return name_of(m, kMethods); }

Speaker speaker_from_string(std::string_view s) { return lookup(s, kSpeakers, "speaker"); }
Split split_from_string(std::string_view s) { return lookup(s, kSplits, "split"); }
ActLabel act_from_string(std::string_view s) { return lookup(s, kActs, "act"); }
CorrectnessLabel correctness_from_string(std::string_view s) {
    return lookup(s, kCorrectness, "correctness label");
}
TraitLevel trait_level_from_string(std::string_view s) { return lookup(s, kLevels, "trait level"); }
SimMethod method_from_string(std::string_view s) { return lookup(s, kMethods, "method"); }

std::string CandidateTurn::group_key() const {
    return system.empty() ? std::string(to_string(method)) : system;
}

std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    auto b = std::find_if_not(s.begin(), s.end(), is_space);
    auto e = std::find_if_not(s.rbegin(), std::string_view::reverse_iterator(b), is_space).base();
    return std::string(b, e);
}

std::string ValidationResult::summary() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) os << "; ";
        os << violations[i].message;
    }
    return os.str();
}

ValidationResult validate_dialogue(const Dialogue& d) {
    ValidationResult r;
    auto add = [&](std::vector<int> idx, std::string msg) {
        r.violations.push_back({std::move(idx), std::move(msg)});
    };

    if (d.turns.empty()) add({}, "empty dialogue");

    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Turn& t = d.turns[i];
        if (t.index != static_cast<int>(i))
            add({t.index}, "turn index " + std::to_string(t.index) + " at position " +
                               std::to_string(i) + " (indices must be consecutive from 0)");
        if (trim(t.text).empty()) add({t.index}, "empty text at turn " + std::to_string(t.index));
        if (i > 0 && d.turns[i - 1].speaker == t.speaker) {
            std::vector<int> idx{d.turns[i - 1].index, t.index};
            add(idx, "consecutive " + std::string(to_string(t.speaker)) + " turns at " +
                         join_indices(idx));
        }
    }

    if (d.subjects.empty()) {
        add({}, "subjects list is empty");
    } else {
        auto n = std::count(d.subjects.begin(), d.subjects.end(), std::string(kDefaultKc));
        if (n != 1)
            add({}, "subjects must contain \"Default\" exactly once (found " + std::to_string(n) + ")");
    }
    return r;
}

void require_valid(const Dialogue& d) {
    auto r = validate_dialogue(d);
    if (!r.ok()) throw PreconditionError("invalid dialogue " + d.id + ": " + r.summary());
}

std::vector<Turn> merge_bursts(std::vector<Turn> turns) {
    std::vector<Turn> out;
    out.reserve(turns.size());
    for (auto& t : turns) {
        if (!out.empty() && out.back().speaker == t.speaker) {
            out.back().text += '\n';
            out.back().text += t.text;
        } else {
            out.push_back(std::move(t));
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].index = static_cast<int>(i);
    return out;
}

int turn_pair_count(const Dialogue& d) {
    require_valid(d);
    int pairs = 0;
    for (std::size_t i = 0; i + 1 < d.turns.size(); ++i)
        if (d.turns[i].speaker == Speaker::tutor && d.turns[i + 1].speaker == Speaker::student) ++pairs;
    return pairs;
}

std::vector<StudentSlot> student_turn_slots(const Dialogue& d) {
    std::vector<StudentSlot> slots;
    int tutors = 0;
    int students = 0;
    std::span<const Turn> all(d.turns);
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        if (d.turns[i].speaker == Speaker::student) {
            slots.push_back({d.turns[i].index, tutors, students, all.first(i)});
            ++students;
        } else {
            ++tutors;
        }
    }
    return slots;
}

StudentSlot slot_at(const Dialogue& d, int turn_index) {
    for (const auto& s : student_turn_slots(d))
        if (s.turn_index == turn_index) return s;
    throw PreconditionError("turn " + std::to_string(turn_index) + " of dialogue " + d.id +
                            " is not a student turn");
}

const Turn* next_tutor_turn(const Dialogue& d, int turn_index) {
    auto next = static_cast<std::size_t>(turn_index) + 1;
    if (turn_index < 0 || next >= d.turns.size()) return nullptr;
    return d.turns[next].speaker == Speaker::tutor ? &d.turns[next] : nullptr;
}

}  // namespace simeval
