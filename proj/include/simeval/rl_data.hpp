#pragma once

// Scalar rewards from metric reports and preference pairs for preference-optimization training.

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "simeval/backends.hpp"
#include "simeval/corpus.hpp"
#include "simeval/metrics.hpp"

namespace simeval {

/// How the early-turn exclusion counts turns.
enum class TurnCounting { student_slots, turn_pairs, raw_turns };
std::string_view to_string(TurnCounting t);
TurnCounting turn_counting_from_string(std::string_view s);

struct RewardConfig {
    std::set<Metric> included{kAllMetrics.begin(), kAllMetrics.end()};
    double epsilon = 0.1;
    int min_turn_pair = 5;
    int n = 4;            // expected candidates per slot
    bool strict = true;   // diff > epsilon; false switches to >= (1e-12 rounding allowance)
    TurnCounting counting = TurnCounting::student_slots;

    /// Throws PreconditionError when `included` is empty or epsilon is negative.
    void validate() const;
};

/// Mean over included and applicable metrics; nullopt when none applies.
std::optional<double> aggregate_reward(const MetricReport& r, const RewardConfig& cfg);

struct ScoredCandidate {
    std::string text;
    double reward = 0.0;
    int sample_id = 0;
};

struct SlotCandidates {
    std::string dialogue_id;
    int turn_index = 0;
    int pair_index = 0;
    int student_ordinal = 0;
    std::vector<ChatMessage> prompt;  // system message first
    std::vector<ScoredCandidate> candidates;
};

struct PreferencePair {
    std::string dialogue_id;
    int turn_index = 0;
    std::vector<ChatMessage> prompt;
    std::string chosen;
    std::string rejected;
    double margin = 0.0;
};

/// Position of a slot under the configured counting.
int slot_position(const SlotCandidates& s, TurnCounting counting);

/// All unordered candidate pairs whose reward difference passes the threshold, ordered by
/// descending margin. Slots before min_turn_pair yield nothing.
std::vector<PreferencePair> build_preference_pairs(const SlotCandidates& slot, const RewardConfig& cfg);

/// Sorts by (dialogue_id, turn_index, descending margin) and writes prompt/chosen/rejected/margin
/// records. Zero pairs still creates the file.
void export_pairs(std::vector<PreferencePair> pairs, const std::filesystem::path& path);

struct PairBuildStats {
    std::size_t slots = 0;
    std::size_t slots_too_early = 0;
    std::size_t slots_unexpected_count = 0;  // candidate count differs from cfg.n
    std::size_t undefined_rewards = 0;       // candidates dropped for lack of an applicable metric
    std::size_t pairs = 0;
};

struct PairBuildResult {
    std::vector<PreferencePair> pairs;
    PairBuildStats stats;
};

/// Joins reports to candidates by (dialogue, turn, system, sample) and builds pairs per slot.
/// The prompt is the fine-tuned student prompt for the slot. Throws PreconditionError when a
/// report has no matching candidate or dialogue.
PairBuildResult build_pairs_from_reports(const Corpus& c, const std::vector<CandidateTurn>& candidates,
                                         const std::vector<MetricReport>& reports, const RewardConfig& cfg);

}  // namespace simeval
