#pragma once

// Stage runners behind the command-line tool, run manifests and the configured pipeline.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simeval/corpus.hpp"
#include "simeval/error.hpp"
#include "simeval/metrics.hpp"
#include "simeval/rl_data.hpp"
#include "simeval/report.hpp"

namespace simeval {

inline constexpr std::string_view kToolVersion = "0.3.0";

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::map<std::string, std::string> inputs;   // path -> sha256
    std::map<std::string, std::string> outputs;  // path -> sha256
    std::string tool_version{kToolVersion};
    std::string started_at;
    std::string finished_at;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

std::string file_sha256(const std::filesystem::path& p);

/// Sidecar path holding the manifest that produced `output`: "<output>.manifest.json".
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

/// Writes the manifest next to every output it lists.
void write_manifests(const RunManifest& m);

/// True when every output has a sidecar manifest with the same command, config hash and input
/// hashes, and the output bytes still match the recorded hash.
bool outputs_up_to_date(const std::string& command, const std::string& config_hash,
                        const std::vector<std::filesystem::path>& inputs,
                        const std::vector<std::filesystem::path>& outputs);

/// Loads a corpus and, when given, its annotation cache.
Corpus load_corpus_with_annotations(const std::filesystem::path& corpus,
                                    const std::optional<std::filesystem::path>& annotations);

using Log = std::function<void(const std::string&)>;

struct AnnotateStage {
    std::filesystem::path corpus;
    std::filesystem::path backends;
    std::optional<std::filesystem::path> existing;  // annotations to extend
    std::vector<AnnotationKind> kinds{kAllAnnotationKinds.begin(), kAllAnnotationKinds.end()};
    int workers = 4;
    std::filesystem::path out;
};

struct SimulateStage {
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> annotations;
    std::filesystem::path backends;
    SimMethod method = SimMethod::zero_shot;
    std::string system;
    int samples = 1;
    std::optional<double> temperature;
    std::optional<int> min_student_ordinal;
    std::uint64_t seed = 0;
    int workers = 4;
    std::filesystem::path out;
};

struct EvaluateStage {
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> annotations;
    std::filesystem::path candidates;
    std::filesystem::path backends;
    std::optional<std::filesystem::path> boundaries_in;  // preset, e.g. fit on the train split
    bool kt_uses_persona = true;
    int workers = 4;
    std::filesystem::path out;
    std::optional<std::filesystem::path> boundaries_out;
};

struct PairsStage {
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> annotations;
    std::filesystem::path candidates;
    std::filesystem::path reports;
    RewardConfig reward;
    std::filesystem::path out;
};

struct ReportStage {
    std::filesystem::path reports;
    std::optional<std::filesystem::path> study;  // with `human`: agreement table
    std::optional<std::filesystem::path> human;  // event log or label JSONL
    std::vector<EmitFormat> formats{EmitFormat::csv, EmitFormat::markdown, EmitFormat::plotdata_json};
    int max_pair_index = 15;
    std::filesystem::path out_dir;
};

struct StageResult {
    std::vector<std::filesystem::path> outputs;
    bool cached = false;
    std::string summary;
};

StageResult run_annotate(const AnnotateStage& s, const Log& log = {});
StageResult run_simulate(const SimulateStage& s, const Log& log = {});
StageResult run_evaluate(const EvaluateStage& s, const Log& log = {});
StageResult run_pairs(const PairsStage& s, const Log& log = {});
StageResult run_report(const ReportStage& s, const Log& log = {});

struct ValidateSummary {
    std::size_t loaded = 0;
    std::vector<Rejection> rejected;
    CorpusStats stats;
    std::vector<std::string> annotation_violations;
};

ValidateSummary run_validate(const std::filesystem::path& corpus,
                             const std::optional<std::filesystem::path>& annotations);

/// Reads labels from an anneval event log ({"event":"label"} records) or plain label JSONL.
std::vector<nlohmann::json> read_label_records(const std::filesystem::path& path);

class StageError : public Error {
public:
    StageError(std::string stage, const std::string& msg) : Error(stage + ": " + msg), stage(std::move(stage)) {}
    std::string stage;
};

struct PipelineResult {
    std::vector<std::pair<std::string, StageResult>> stages;
};

/// Runs the stages listed in a TOML pipeline config in order. Paths resolve against the config's
/// directory; outputs go to [pipeline].out_dir. A failing stage raises StageError naming it;
/// earlier outputs are left in place.
PipelineResult run_pipeline(const std::filesystem::path& config, const Log& log = {});

}  // namespace simeval
