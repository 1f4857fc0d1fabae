#pragma once

// Human evaluation study: session assembly, blinded task sequencing, write-once label log with
// replay, agreement against the automated metrics, and the JSON-over-HTTP service.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "simeval/corpus.hpp"
#include "simeval/error.hpp"
#include "simeval/metrics.hpp"
#include "simeval/rl_data.hpp"

namespace simeval {

struct StudyConfig {
    int dialogues = 38;
    int turns_per_dialogue = 5;  // consecutive student turns per dialogue
    int overlap_dialogues = 4;   // assigned to the first two annotators
    int min_position = 5;        // earliest allowed slot position under `counting`
    TurnCounting counting = TurnCounting::student_slots;
    std::vector<std::string> methods{"dpo_8b", "zero_shot", "oracle"};
    std::vector<std::string> annotators{"a1", "a2"};
    std::uint64_t seed = 0;
};

enum class TaskKind { ground_truth, simulated };

struct StudyTask {
    std::string task_id;
    std::string dialogue_id;
    int turn_index = 0;
    int pair_index = 0;
    TaskKind kind = TaskKind::ground_truth;
    std::string method;  // simulated tasks only; never sent to annotators
    std::string text;    // turn shown for labeling
    bool overlap = false;
};

struct StudySession {
    std::string annotator;
    std::vector<std::string> dialogue_ids;
    std::vector<StudyTask> tasks;  // presentation order
};

struct Study {
    StudyConfig config;
    std::vector<StudySession> sessions;
    std::set<std::string> overlap_dialogues;
    std::string fingerprint;  // sha256 over the assignment

    const StudySession* session(const std::string& annotator) const;
    std::size_t unique_turns() const;
    std::size_t overlap_turns() const;
};

/// Seeded selection of eligible dialogues and turn windows. A dialogue is eligible when it has
/// `turns_per_dialogue` consecutive student slots at or after `min_position` that all have
/// candidates for every configured method. Per dialogue, the ground-truth tasks come first, then
/// each turn's simulated tasks in a recorded random method order.
/// Throws PreconditionError when too few dialogues are eligible.
Study create_study(const Corpus& c, const std::vector<CandidateTurn>& candidates, const StudyConfig& cfg);

struct HumanLabel {
    std::string annotator;
    std::string task_id;
    ActLabel act = ActLabel::MathAnswer;
    CorrectnessLabel correctness = CorrectnessLabel::na;
    std::optional<bool> same_error;
    std::optional<int> linguistic;  // 1..5, simulated tasks only
    std::string timestamp;

    bool operator==(const HumanLabel&) const = default;
};

nlohmann::json to_json(const HumanLabel& l);
HumanLabel human_label_from_json(const nlohmann::json& j);

/// Rejection with the HTTP status it maps to (400 schema, 404 unknown task, 409 duplicate/order).
class LabelRejected : public Error {
public:
    LabelRejected(int status, const std::string& msg) : Error(msg), status(status) {}
    int status;
};

/// Session state derived from an append-only JSONL event log. Construction replays the log;
/// every accepted label is flushed and fsynced before submit returns.
class StudyState {
public:
    using Clock = std::function<std::string()>;

    StudyState(const Study& study, const Corpus& corpus, std::filesystem::path log_path, Clock clock = {});
    ~StudyState();
    StudyState(const StudyState&) = delete;
    StudyState& operator=(const StudyState&) = delete;

    /// Next task payload, or {"complete": true}. Never contains the method.
    nlohmann::json next_task(const std::string& annotator) const;
    nlohmann::json session_summary(const std::string& annotator) const;

    /// Validates and persists; throws LabelRejected.
    HumanLabel submit(const std::string& annotator, const nlohmann::json& body);

    const std::vector<HumanLabel>& labels() const { return labels_; }
    std::size_t cursor(const std::string& annotator) const;

private:
    HumanLabel validate(const std::string& annotator, const nlohmann::json& body, std::string timestamp) const;
    void apply(const HumanLabel& l);
    void append_event(const nlohmann::json& event);

    const Study& study_;
    const Corpus& corpus_;
    std::filesystem::path log_path_;
    Clock clock_;
    std::FILE* log_ = nullptr;
    std::vector<HumanLabel> labels_;
    std::map<std::string, std::size_t> cursor_;
    // (annotator, dialogue:turn) -> the annotator's ground-truth correctness
    std::map<std::pair<std::string, std::string>, CorrectnessLabel> gt_correctness_;
};

nlohmann::json task_payload(const Study& study, const Corpus& corpus, const StudySession& s, std::size_t index,
                            std::optional<CorrectnessLabel> reference_correctness);

struct AgreementCell {
    std::optional<double> value;
    std::size_t n = 0;
    std::string note;  // why the value is undefined
};

struct AgreementTable {
    // "human_metric.acts", "human_annotation.correctness", "human_human.acts", ...
    std::map<std::string, AgreementCell> cells;
    // method -> {"acts", "correctness", "errors", "linguistic"} human-judged scores
    std::map<std::string, std::map<std::string, AgreementCell>> method_scores;
};

/// Human–metric kappa (acts, correctness, errors) and Pearson (Likert vs cosine); human–LLM
/// annotation kappa on ground-truth turns; human–human agreement on overlap tasks. Cells with
/// fewer than 2 pairs are undefined.
AgreementTable compute_agreement(const Study& study, const std::vector<HumanLabel>& labels,
                                 const std::vector<MetricReport>& reports, const Corpus& corpus);

nlohmann::json to_json(const AgreementTable& t);

struct StudySpec {
    StudyConfig config;
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> annotations;
    std::filesystem::path candidates;
    std::optional<std::filesystem::path> reports;
    std::filesystem::path log;
    std::map<std::string, std::string> tokens;  // bearer token -> annotator
};

/// study.toml (or JSON): [study] paths and sampling, [[annotators]] id + token. Relative paths
/// resolve against the file's directory; ${VAR} is expanded in tokens.
StudySpec load_study_spec(const std::filesystem::path& path);

struct HttpReply {
    int status = 200;
    nlohmann::json body;
};

/// Transport-independent request handling shared by the HTTP server and tests.
class AnnevalService {
public:
    AnnevalService(Study study, Corpus corpus, std::vector<MetricReport> reports,
                   std::map<std::string, std::string> tokens, std::filesystem::path log_path,
                   StudyState::Clock clock = {});

    HttpReply handle(const std::string& method, const std::string& path, const std::string& authorization,
                     const std::string& body);

    const Study& study() const { return study_; }
    std::vector<HumanLabel> labels() const;

private:
    std::optional<std::string> authenticate(const std::string& authorization) const;

    Study study_;
    Corpus corpus_;
    std::vector<MetricReport> reports_;
    std::map<std::string, std::string> tokens_;
    mutable std::mutex mu_;
    std::unique_ptr<StudyState> state_;
};

class AnnevalHttpServer {
public:
    explicit AnnevalHttpServer(AnnevalService& service);
    ~AnnevalHttpServer();

    /// Binds and serves on a background thread; port 0 picks a free port. Returns the bound port.
    int start(const std::string& host, int port);
    /// Blocks serving on the calling thread.
    void listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace simeval
