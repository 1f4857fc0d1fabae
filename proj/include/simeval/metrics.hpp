#pragma once

// The seven reference-based metrics and the per-turn orchestration producing MetricReports.

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "simeval/backends.hpp"
#include "simeval/core.hpp"
#include "simeval/corpus.hpp"

namespace simeval {

enum class Metric { acts, correctness, errors, knowledge, cos_sim, rouge_l, tutor_resp };
inline constexpr std::array<Metric, 7> kAllMetrics = {Metric::acts,    Metric::correctness, Metric::errors,
                                                      Metric::knowledge, Metric::cos_sim,  Metric::rouge_l,
                                                      Metric::tutor_resp};
std::string_view to_string(Metric m);
Metric metric_from_string(std::string_view s);

struct MetricValue {
    std::optional<double> value;  // present iff applicable
    std::string reason;           // why it is inapplicable

    bool applicable() const { return value.has_value(); }
    bool operator==(const MetricValue&) const = default;
};

/// Labels behind the scores, kept for reports and agreement studies.
struct CandidateLabels {
    std::optional<ActLabel> act;
    std::optional<CorrectnessLabel> correctness;
    std::optional<bool> same_error;
    std::optional<double> raw_cosine;
    std::optional<double> mean_quantile;

    bool operator==(const CandidateLabels&) const = default;
};

struct MetricReport {
    std::string dialogue_id;
    int turn_index = 0;
    int pair_index = 0;
    int student_ordinal = 0;
    SimMethod method = SimMethod::external;
    std::string system;
    int sample_id = 0;
    std::array<MetricValue, 7> metrics;
    CandidateLabels labels;
    std::vector<std::string> failures;  // per-metric errors that made a metric inapplicable

    MetricValue& at(Metric m) { return metrics[static_cast<std::size_t>(m)]; }
    const MetricValue& at(Metric m) const { return metrics[static_cast<std::size_t>(m)]; }
    std::string group_key() const { return system.empty() ? std::string(to_string(method)) : system; }
    bool operator==(const MetricReport&) const = default;
};

nlohmann::json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);
void write_reports(const std::filesystem::path& path, const std::vector<MetricReport>& reports);
std::vector<MetricReport> read_reports(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Acts

int act_similarity(ActLabel gt, ActLabel cand);

/// Dialogue prefix with the candidate spliced in as the student turn at the slot.
Dialogue splice_candidate(const Dialogue& d, const StudentSlot& slot, const std::string& candidate_text);

/// Labels the candidate with the acts annotation prompt applied to the spliced dialogue.
ActLabel classify_candidate_act(const Dialogue& d, const StudentSlot& slot, const std::string& candidate_text,
                                ChatClient& chat);

// ---------------------------------------------------------------------------
// Correctness and errors

struct JudgeVerdict {
    CorrectnessLabel correctness = CorrectnessLabel::na;
    std::optional<bool> same_error;  // present iff ground truth and candidate are both incorrect

    bool operator==(const JudgeVerdict&) const = default;
};

ChatRequest judge_request(const Dialogue& d, const StudentSlot& slot, const std::string& gt_text,
                          CorrectnessLabel gt_label, const std::string& candidate_text,
                          std::optional<int> correct_option);

/// Parses the last non-empty line: "correct" | "incorrect" | "na", plus ", same error" or
/// ", different error" exactly when both turns are incorrect. Throws ParseError otherwise.
JudgeVerdict parse_judge_verdict(std::string_view raw, CorrectnessLabel gt_label);

JudgeVerdict judge_correctness_and_error(const Dialogue& d, const StudentSlot& slot, const std::string& gt_text,
                                         CorrectnessLabel gt_label, const std::string& candidate_text,
                                         std::optional<int> correct_option, ChatClient& judge);

/// Inapplicable (nullopt) iff gt = na.
std::optional<double> correctness_similarity(CorrectnessLabel gt, CorrectnessLabel cand);

/// Inapplicable iff gt != incorrect; 0 if the candidate is not incorrect; else same_error.
std::optional<double> error_similarity(CorrectnessLabel gt, CorrectnessLabel cand, std::optional<bool> same_error);

// ---------------------------------------------------------------------------
// Knowledge acquisition

struct KnowledgeState {
    std::map<std::string, double> z;  // KC -> mastery in (0,1)
    int turn_index = -1;              // last student turn reflected, -1 for the empty prefix
};

/// KT prompt: question, plain prefix, "Knowledge component: <kc>", optionally the persona.
ChatRequest kt_request(const Question& q, std::span<const Turn> prefix, const std::string& kc,
                       const OceanPersona* persona);

KnowledgeState estimate_knowledge_state(const Question& q, std::span<const Turn> prefix,
                                        const std::vector<std::string>& kcs, Scorer& kt,
                                        const OceanPersona* persona = nullptr);

/// Mean of the KC masteries: estimated probability of answering the next task correctly.
double correct_answer_probability(const KnowledgeState& s, const std::vector<std::string>& kcs);

/// cur - prev per KC. Throws PreconditionError when the KC keys differ.
std::map<std::string, double> knowledge_delta(const KnowledgeState& prev, const KnowledgeState& cur);

struct QuantileBoundaries {
    std::array<double, 4> upper{};  // bins 0..3; bin 4 is unbounded
    std::size_t fit_count = 0;
    std::string population;

    bool operator==(const QuantileBoundaries&) const = default;
};

/// 20/40/60/80th percentiles (linear interpolation between order statistics). Needs >= 5 values.
QuantileBoundaries fit_quantile_boundaries(std::vector<double> values, std::string population = {});

/// Smallest k with delta <= upper[k]; 4 when delta exceeds every bound.
int quantize(double delta, const QuantileBoundaries& b);

struct KnowledgeDistance {
    long numerator = 0;    // sum |q - q_hat|
    long denominator = 0;  // 4 |C|
    double similarity() const { return 1.0 - static_cast<double>(numerator) / static_cast<double>(denominator); }
};

KnowledgeDistance knowledge_distance(const std::map<std::string, int>& gt, const std::map<std::string, int>& cand);

/// 1 - sum |q_k - q_hat_k| / (4 |C|). Throws PreconditionError on key mismatch or values outside 0..4.
double knowledge_similarity(const std::map<std::string, int>& gt, const std::map<std::string, int>& cand);

// ---------------------------------------------------------------------------
// Linguistic similarity

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct CosineResult {
    double raw = 0.0;
    double value = 0.0;  // clamped to [0,1]
};

CosineResult embedding_cosine(const std::string& gt_text, const std::string& cand_text, Embedder& embedder);

/// Lowercase, split on runs of non-alphanumeric ASCII characters, drop empties.
std::vector<std::string> rouge_tokenize(std::string_view text);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct RougeScore {
    std::size_t lcs = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

RougeScore rouge_l_score(std::string_view candidate, std::string_view reference);

/// ROUGE-L F-measure of candidate against reference. Both empty -> 1, exactly one empty -> 0.
double rouge_l(std::string_view candidate, std::string_view reference);

// ---------------------------------------------------------------------------
// Tutor responses

/// exp of the mean logprob: geometric-mean token probability in (0,1].
double tutor_response_likelihood(std::span<const double> logprobs);

/// Scoring context: tutor system prompt, question, "Student:/Tutor:" lines through the spliced
/// candidate, then "Tutor: " awaiting the continuation.
std::string tutor_context(const Dialogue& d, const StudentSlot& slot, const std::string& student_text,
                          std::optional<int> correct_option);

double score_tutor_response(const Dialogue& d, const StudentSlot& slot, const std::string& student_text,
                            const Turn& next_tutor, std::optional<int> correct_option, Scorer& tutor);

// ---------------------------------------------------------------------------
// Orchestration

struct EvalBackends {
    ChatClient* acts = nullptr;    // candidate act classification (annotation prompt)
    ChatClient* judge = nullptr;   // correctness and errors
    Embedder* embedder = nullptr;  // cosine similarity
    Scorer* kt = nullptr;          // knowledge states
    Scorer* tutor = nullptr;       // tutor responses
};

struct EvalOptions {
    bool kt_uses_persona = true;
    int workers = 4;
};

/// Knowledge applicability for a slot and the ground-truth quantities it needs.
struct KnowledgeBaseline {
    bool applicable = false;
    std::string reason;
    std::vector<std::string> kcs;
    KnowledgeState prev;
    std::map<std::string, double> gt_delta;
};

/// Previous state = prefix through the previous student turn (question-only prefix when the slot
/// has no earlier student turn). Applicable iff a next tutor turn with annotated KCs exists.
KnowledgeBaseline knowledge_baseline(const Dialogue& d, const StudentSlot& slot, const AnnotationSet* a,
                                     const MetricEligibility& elig, Scorer& kt, bool use_persona);

std::map<std::string, double> candidate_knowledge_delta(const Dialogue& d, const StudentSlot& slot,
                                                        const std::string& candidate_text,
                                                        const KnowledgeBaseline& base, const AnnotationSet* a,
                                                        Scorer& kt, bool use_persona);

/// Scores one candidate. Per-metric failures mark the metric inapplicable and are listed in
/// `failures`; they never abort the call. `boundaries` may be null when knowledge is not wanted.
MetricReport evaluate_turn(const Dialogue& d, const StudentSlot& slot, const CandidateTurn& cand,
                           const AnnotationSet* annotations, const MetricEligibility& elig,
                           const EvalBackends& backends, const QuantileBoundaries* boundaries,
                           const KnowledgeBaseline* baseline = nullptr, const EvalOptions& opts = {});

struct BatchResult {
    std::vector<MetricReport> reports;  // in candidate order
    std::optional<QuantileBoundaries> boundaries;
};

/// Two-phase batch evaluation: ground-truth knowledge deltas for every slot of the evaluated
/// dialogues are collected first and the quantile boundaries fit on them (unless `preset` is
/// given); candidates are then scored in parallel.
BatchResult evaluate_batch(const Corpus& c, const std::vector<CandidateTurn>& candidates,
                           const EvalBackends& backends, const EvalOptions& opts = {},
                           const std::optional<QuantileBoundaries>& preset = std::nullopt);

nlohmann::json to_json(const QuantileBoundaries& b);
QuantileBoundaries boundaries_from_json(const nlohmann::json& j);

}  // namespace simeval
