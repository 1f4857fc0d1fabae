#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "simeval/core.hpp"

namespace simeval {

struct SolutionRecord {
    std::string solution;
    bool solvable = true;
    int correct_option = 1;  // 1..4
    std::array<std::string, 4> option_explanations;

    bool operator==(const SolutionRecord&) const = default;
};

enum class FailureFlag { acts_failed, correctness_failed, kcs_failed };
std::string_view to_string(FailureFlag f);

enum class AnnotationKind { acts, correctness, kcs, persona, summary, solution };
inline constexpr std::array<AnnotationKind, 6> kAllAnnotationKinds = {
    AnnotationKind::acts, AnnotationKind::correctness, AnnotationKind::kcs,
    AnnotationKind::persona, AnnotationKind::summary, AnnotationKind::solution};
std::string_view to_string(AnnotationKind k);
AnnotationKind annotation_kind_from_string(std::string_view s);

struct AnnotationSet {
    std::map<int, ActLabel> acts;                       // student turn -> act
    std::map<int, CorrectnessLabel> correctness;        // student turn -> label
    std::map<int, std::set<std::string>> kcs;           // tutor turn -> KC names
    std::optional<OceanPersona> persona;
    std::optional<std::string> oracle_summary;
    std::optional<SolutionRecord> solution;
    std::set<FailureFlag> failure_flags;

    bool failed(FailureFlag f) const { return failure_flags.contains(f); }
    bool operator==(const AnnotationSet&) const = default;
};

/// Checks the AnnotationSet invariants against its dialogue; returns violation messages.
std::vector<std::string> check_annotations(const Dialogue& d, const AnnotationSet& a);

struct Provenance {
    std::string source_path;
    std::string loaded_at;  // ISO-8601 UTC
};

struct Corpus {
    std::vector<Dialogue> dialogues;
    std::map<std::string, AnnotationSet> annotations;
    Provenance provenance;

    const Dialogue* find(const std::string& id) const;
    const AnnotationSet* annotations_for(const std::string& id) const;
    /// Annotation set for id, created on first access. The dialogue must exist.
    AnnotationSet& annotations_mut(const std::string& id);
};

struct Rejection {
    std::size_t line = 0;  // 1-based
    std::string dialogue_id;
    std::string reason;
};

struct LoadResult {
    Corpus corpus;
    std::vector<Rejection> rejected;
};

/// Reads dialogue JSONL. Records that fail to parse or validate are rejected with their line number;
/// the remainder loads. Consecutive same-speaker turns are merged before validation.
/// Throws IoError if the file is unreadable.
LoadResult load_corpus(const std::filesystem::path& path);

/// Parses one dialogue record (throws ParseError on schema problems; does not validate structure).
Dialogue dialogue_from_record(const std::string& jsonl_line);

void save_corpus(const Corpus& c, const std::filesystem::path& path);

struct FilterResult {
    Corpus corpus;
    std::vector<std::string> removed_ids;
};

/// Removes dialogues whose solution is flagged unsolvable. Throws PreconditionError naming the
/// first dialogue without a SolutionRecord.
FilterResult filter_unsolvable(const Corpus& c);

struct SplitRequest {
    std::optional<std::size_t> validation_count;
    double validation_fraction = 0.0;  // used when validation_count is empty; rounded to nearest
    std::uint64_t seed = kDefaultSplitSeed;

    static constexpr std::uint64_t kDefaultSplitSeed = 1147;
};

struct TrainValidation {
    Corpus train;
    Corpus validation;
};

/// Uniform random train/validation split of a train-split corpus. Deterministic given the seed
/// across platforms (own Fisher-Yates over mt19937_64).
TrainValidation split_train_validation(const Corpus& c, const SplitRequest& req);

/// Which metric families may use a dialogue's ground-truth labels.
struct MetricEligibility {
    bool acts = true;
    bool correctness = true;
    bool errors = true;
    bool knowledge = true;
};

MetricEligibility eligibility(const AnnotationSet& a);

/// Per-dialogue metric eligibility derived from failure flags; dialogues without annotations
/// (or without flags) are fully eligible.
class EligibilityView {
public:
    explicit EligibilityView(const Corpus& c);
    MetricEligibility operator()(const std::string& dialogue_id) const;

private:
    std::map<std::string, MetricEligibility> by_id_;
};

EligibilityView drop_failed_annotations(const Corpus& c);

// Annotation cache: JSONL, header line followed by one record per (dialogue_id, kind).
inline constexpr int kAnnotationSchemaVersion = 1;

void save_annotations(const std::map<std::string, AnnotationSet>& annotations,
                      const std::filesystem::path& path);

/// Later records for the same (dialogue_id, kind) replace earlier ones. Throws ParseError on an
/// unknown label string or schema version mismatch.
std::map<std::string, AnnotationSet> load_annotations(const std::filesystem::path& path);

/// Attaches loaded annotations; throws PreconditionError if one references an unknown dialogue.
void attach_annotations(Corpus& c, std::map<std::string, AnnotationSet> annotations);

struct CorpusStats {
    std::size_t dialogues = 0;
    std::map<std::string, std::size_t> per_split;
    double mean_turns = 0.0;
    double tutor_initiated_pct = 0.0;
    std::size_t unique_subjects = 0;  // excluding Default
    double mean_subjects = 0.0;       // excluding Default
    double mean_student_words = 0.0;
    double mean_tutor_words = 0.0;
};

CorpusStats corpus_stats(const Corpus& c);

}  // namespace simeval
