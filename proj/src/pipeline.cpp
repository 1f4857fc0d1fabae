#include "simeval/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "simeval/anneval.hpp"
#include "simeval/annotate.hpp"
#include "simeval/backends.hpp"
#include "simeval/config.hpp"
#include "simeval/json_io.hpp"
#include "simeval/simulate.hpp"

namespace simeval {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void say(const Log& log, const std::string& msg) {
    if (log) log(msg);
}

BackendRegistry open_backends(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("backend config not found: " + path.string());
    return BackendRegistry(load_backends_config(path));
}

json opt_path(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

struct Tracker {
    RunManifest m;
    std::vector<fs::path> inputs;

    Tracker(std::string command, const json& params, std::vector<fs::path> in) : inputs(std::move(in)) {
        m.command = std::move(command);
        m.config_hash = sha256_hex(dump_line(params));
        m.started_at = utc_now();
    }

    bool fresh(const std::vector<fs::path>& outputs) const {
        return outputs_up_to_date(m.command, m.config_hash, inputs, outputs);
    }

    void finish(const std::vector<fs::path>& outputs) {
        for (const auto& p : inputs) m.inputs[p.string()] = file_sha256(p);
        for (const auto& p : outputs) m.outputs[p.string()] = file_sha256(p);
        m.finished_at = utc_now();
        write_manifests(m);
    }
};

std::vector<fs::path> with_optional(std::vector<fs::path> v, const std::optional<fs::path>& p) {
    if (p) v.push_back(*p);
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifests

json to_json(const RunManifest& m) {
    return {{"command", m.command},         {"config_hash", m.config_hash}, {"inputs", m.inputs},
            {"outputs", m.outputs},         {"tool_version", m.tool_version}, {"started_at", m.started_at},
            {"finished_at", m.finished_at}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
        m.tool_version = j.value("tool_version", std::string());
        m.started_at = j.value("started_at", std::string());
        m.finished_at = j.value("finished_at", std::string());
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

std::string file_sha256(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

fs::path manifest_path_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

void write_manifests(const RunManifest& m) {
    const std::string text = to_json(m).dump(2) + "\n";
    for (const auto& [out, hash] : m.outputs) write_text(manifest_path_for(out), text);
}

bool outputs_up_to_date(const std::string& command, const std::string& config_hash, const std::vector<fs::path>& inputs,
                        const std::vector<fs::path>& outputs) {
    try {
        for (const auto& out : outputs) {
            if (!fs::exists(out) || !fs::exists(manifest_path_for(out))) return false;
            std::ifstream in(manifest_path_for(out));
            auto m = manifest_from_json(json::parse(in));
            if (m.command != command || m.config_hash != config_hash || m.tool_version != kToolVersion) return false;
            if (m.inputs.size() != inputs.size()) return false;
            for (const auto& p : inputs) {
                auto it = m.inputs.find(p.string());
                if (it == m.inputs.end() || !fs::exists(p) || it->second != file_sha256(p)) return false;
            }
            auto it = m.outputs.find(out.string());
            if (it == m.outputs.end() || it->second != file_sha256(out)) return false;
        }
    } catch (const std::exception&) {
        return false;
    }
    return !outputs.empty();
}

Corpus load_corpus_with_annotations(const fs::path& corpus, const std::optional<fs::path>& annotations) {
    auto loaded = load_corpus(corpus);
    if (!loaded.rejected.empty()) {
        const auto& r = loaded.rejected.front();
        throw ParseError(corpus.string() + ":" + std::to_string(r.line) + ": " + r.reason + " (" +
                         std::to_string(loaded.rejected.size()) + " record(s) rejected; run validate)");
    }
    if (annotations) attach_annotations(loaded.corpus, load_annotations(*annotations));
    return std::move(loaded.corpus);
}

// ---------------------------------------------------------------------------
// Stages

StageResult run_annotate(const AnnotateStage& s, const Log& log) {
    json kinds = json::array();
    for (auto k : s.kinds) kinds.push_back(std::string(to_string(k)));
    Tracker t("annotate", {{"kinds", kinds}}, with_optional({s.corpus, s.backends}, s.existing));
    StageResult r;
    r.outputs = {s.out};
    if (t.fresh(r.outputs)) {
        r.cached = true;
        r.summary = "annotate: up to date";
        return r;
    }
    auto reg = open_backends(s.backends);
    auto chat = reg.chat(Role::annotate);
    Corpus c = load_corpus_with_annotations(s.corpus, s.existing);
    auto jobs = annotate_corpus(c, s.kinds, *chat, s.workers);
    std::size_t failed = 0;
    for (const auto& j : jobs) {
        if (j.ok) continue;
        ++failed;
        say(log, "annotate: " + j.dialogue_id + " " + std::string(to_string(j.kind)) + " failed: " + j.error);
    }
    save_annotations(c.annotations, s.out);
    t.finish(r.outputs);
    r.summary = "annotate: " + std::to_string(jobs.size()) + " jobs, " + std::to_string(failed) + " parse failures";
    return r;
}

StageResult run_simulate(const SimulateStage& s, const Log&) {
    json params{{"method", std::string(to_string(s.method))},
                {"system", s.system},
                {"samples", s.samples},
                {"temperature", s.temperature ? json(*s.temperature) : json(nullptr)},
                {"min_student_ordinal", s.min_student_ordinal ? json(*s.min_student_ordinal) : json(nullptr)},
                {"seed", s.seed}};
    Tracker t("simulate", params, with_optional({s.corpus, s.backends}, s.annotations));
    StageResult r;
    r.outputs = {s.out};
    if (t.fresh(r.outputs)) {
        r.cached = true;
        r.summary = "simulate: up to date";
        return r;
    }
    auto reg = open_backends(s.backends);
    auto chat = reg.chat(Role::student);
    Corpus c = load_corpus_with_annotations(s.corpus, s.annotations);

    SimulateOptions opts;
    opts.method = SimMethodConfig::defaults(s.method);
    if (!s.system.empty()) opts.method.system = s.system;
    if (s.temperature) opts.method.decoding.temperature = *s.temperature;
    opts.method.decoding.seed = s.seed;
    opts.samples = s.samples;
    opts.min_student_ordinal = s.min_student_ordinal;
    opts.workers = s.workers;

    std::shared_ptr<Embedder> embedder;
    RetrievalIndex index;
    if (s.method == SimMethod::icl) {
        embedder = reg.embedder(Role::embed);
        index = build_retrieval_index(c, *embedder);
    }
    auto cands = simulate_corpus(c, opts, *chat, s.method == SimMethod::icl ? &index : nullptr, &c, embedder.get());
    write_candidates(s.out, cands);
    t.finish(r.outputs);
    r.summary = "simulate: " + std::to_string(cands.size()) + " candidates";
    return r;
}

StageResult run_evaluate(const EvaluateStage& s, const Log&) {
    json params{{"kt_uses_persona", s.kt_uses_persona}, {"boundaries_in", opt_path(s.boundaries_in)}};
    auto inputs = with_optional(with_optional({s.corpus, s.candidates, s.backends}, s.annotations), s.boundaries_in);
    Tracker t("evaluate", params, inputs);
    StageResult r;
    r.outputs = with_optional({s.out}, s.boundaries_out);
    if (t.fresh(r.outputs)) {
        r.cached = true;
        r.summary = "evaluate: up to date";
        return r;
    }
    auto reg = open_backends(s.backends);
    EvalBackends be;
    std::shared_ptr<ChatClient> acts, judge;
    std::shared_ptr<Embedder> emb;
    std::shared_ptr<Scorer> kt, tutor;
    if (reg.has_role(Role::annotate)) be.acts = (acts = reg.chat(Role::annotate)).get();
    if (reg.has_role(Role::judge)) be.judge = (judge = reg.chat(Role::judge)).get();
    if (reg.has_role(Role::embed)) be.embedder = (emb = reg.embedder(Role::embed)).get();
    if (reg.has_role(Role::kt)) be.kt = (kt = reg.scorer(Role::kt)).get();
    if (reg.has_role(Role::tutor)) be.tutor = (tutor = reg.scorer(Role::tutor)).get();

    Corpus c = load_corpus_with_annotations(s.corpus, s.annotations);
    auto cands = read_candidates(s.candidates);
    std::optional<QuantileBoundaries> preset;
    if (s.boundaries_in) {
        std::ifstream in(*s.boundaries_in);
        if (!in) throw IoError("cannot read " + s.boundaries_in->string());
        preset = boundaries_from_json(json::parse(in));
    }
    EvalOptions opts;
    opts.kt_uses_persona = s.kt_uses_persona;
    opts.workers = s.workers;
    auto res = evaluate_batch(c, cands, be, opts, preset);
    write_reports(s.out, res.reports);
    if (s.boundaries_out) {
        json b = res.boundaries ? to_json(*res.boundaries) : json(nullptr);
        write_text(*s.boundaries_out, b.dump(2) + "\n");
    }
    std::size_t failures = 0;
    for (const auto& rep : res.reports) failures += rep.failures.size();
    t.finish(r.outputs);
    r.summary = "evaluate: " + std::to_string(res.reports.size()) + " reports, " + std::to_string(failures) +
                " metric failures";
    return r;
}

StageResult run_pairs(const PairsStage& s, const Log&) {
    json metrics = json::array();
    for (auto m : s.reward.included) metrics.push_back(std::string(to_string(m)));
    json params{{"metrics", metrics},
                {"epsilon", s.reward.epsilon},
                {"min_turn", s.reward.min_turn_pair},
                {"n", s.reward.n},
                {"strict", s.reward.strict},
                {"counting", std::string(to_string(s.reward.counting))}};
    Tracker t("pairs", params, with_optional({s.corpus, s.candidates, s.reports}, s.annotations));
    StageResult r;
    r.outputs = {s.out};
    if (t.fresh(r.outputs)) {
        r.cached = true;
        r.summary = "pairs: up to date";
        return r;
    }
    Corpus c = load_corpus_with_annotations(s.corpus, s.annotations);
    auto res = build_pairs_from_reports(c, read_candidates(s.candidates), read_reports(s.reports), s.reward);
    export_pairs(res.pairs, s.out);
    t.finish(r.outputs);
    const auto& st = res.stats;
    r.summary = "pairs: " + std::to_string(st.pairs) + " pairs from " + std::to_string(st.slots) + " slots (" +
                std::to_string(st.slots_too_early) + " too early, " + std::to_string(st.undefined_rewards) +
                " undefined rewards, " + std::to_string(st.slots_unexpected_count) + " slots with unexpected counts)";
    return r;
}

std::vector<json> read_label_records(const fs::path& path) {
    std::vector<json> out;
    for (const auto& j : read_jsonl(path)) {
        if (j.contains("event")) {
            if (j["event"] == "label") out.push_back(j.at("label"));
        } else {
            out.push_back(j);
        }
    }
    return out;
}

StageResult run_report(const ReportStage& s, const Log&) {
    json formats = json::array();
    for (auto f : s.formats) formats.push_back(std::string(extension(f)));
    json params{{"formats", formats}, {"max_pair_index", s.max_pair_index}, {"study", opt_path(s.study)}};
    if (s.human && !s.study) throw PreconditionError("--human needs --study to rebuild the task assignment");
    std::vector<fs::path> inputs = with_optional(with_optional({s.reports}, s.study), s.human);

    StageResult r;
    for (auto f : s.formats)
        for (const char* name : {"metric_table", "act_distribution", "correctness_distribution", "per_turn"})
            r.outputs.push_back(s.out_dir / (std::string(name) + std::string(extension(f))));
    if (s.human) r.outputs.push_back(s.out_dir / "agreement.json");

    Tracker t("report", params, inputs);
    if (t.fresh(r.outputs)) {
        r.cached = true;
        r.summary = "report: up to date";
        return r;
    }
    auto reports = read_reports(s.reports);
    const auto table = metric_table(reports);
    const auto acts = act_distribution(reports);
    const auto corr = correctness_distribution(reports);
    const auto turns = per_turn_breakdown(reports, s.max_pair_index);
    for (auto f : s.formats) {
        const std::string ext(extension(f));
        write_text(s.out_dir / ("metric_table" + ext), render(table, f));
        write_text(s.out_dir / ("act_distribution" + ext), render(acts, f));
        write_text(s.out_dir / ("correctness_distribution" + ext), render(corr, f));
        write_text(s.out_dir / ("per_turn" + ext), render(turns, f));
    }
    if (s.human) {
        auto spec = load_study_spec(*s.study);
        Corpus c = load_corpus_with_annotations(spec.corpus, spec.annotations);
        auto study = create_study(c, read_candidates(spec.candidates), spec.config);
        std::vector<HumanLabel> labels;
        for (const auto& j : read_label_records(*s.human)) labels.push_back(human_label_from_json(j));
        auto table_h = compute_agreement(study, labels, reports, c);
        write_text(s.out_dir / "agreement.json", to_json(table_h).dump(2) + "\n");
    }
    t.finish(r.outputs);
    r.summary = "report: " + std::to_string(table.rows.size()) + " systems, " + std::to_string(reports.size()) + " reports";
    return r;
}

ValidateSummary run_validate(const fs::path& corpus, const std::optional<fs::path>& annotations) {
    auto loaded = load_corpus(corpus);
    ValidateSummary s;
    s.loaded = loaded.corpus.dialogues.size();
    s.rejected = std::move(loaded.rejected);
    s.stats = corpus_stats(loaded.corpus);
    if (annotations) {
        auto ann = load_annotations(*annotations);
        for (const auto& [id, a] : ann) {
            const Dialogue* d = loaded.corpus.find(id);
            if (!d) {
                s.annotation_violations.push_back(id + ": annotations for unknown dialogue");
                continue;
            }
            for (const auto& v : check_annotations(*d, a)) s.annotation_violations.push_back(id + ": " + v);
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Pipeline

PipelineResult run_pipeline(const fs::path& config, const Log& log) {
    const json doc = load_config_document(config);
    const fs::path base = config.has_parent_path() ? config.parent_path() : fs::path(".");
    auto resolve = [&](const std::string& p) {
        fs::path x(p);
        return x.is_absolute() ? x : base / x;
    };
    auto section = [&](const char* name) { return doc.contains(name) ? doc[name] : json::object(); };

    PipelineResult result;
    std::vector<std::string> stages;
    fs::path corpus, backends, out_dir;
    std::optional<fs::path> annotations, candidates, reports;
    int workers = 4;
    try {
        const auto& p = doc.at("pipeline");
        corpus = resolve(p.at("corpus").get<std::string>());
        backends = resolve(p.value("backends", std::string("backends.toml")));
        out_dir = resolve(p.value("out_dir", std::string("out")));
        stages = p.at("stages").get<std::vector<std::string>>();
        workers = p.value("workers", workers);
        if (p.contains("annotations")) annotations = resolve(p["annotations"].get<std::string>());
        if (p.contains("candidates")) candidates = resolve(p["candidates"].get<std::string>());
        if (p.contains("reports")) reports = resolve(p["reports"].get<std::string>());
    } catch (const json::exception& e) {
        throw ParseError(config.string() + ": [pipeline]: " + e.what());
    }
    static const std::set<std::string> known{"annotate", "simulate", "evaluate", "pairs", "report"};
    for (const auto& st : stages)
        if (!known.contains(st)) throw ParseError(config.string() + ": unknown stage \"" + st + "\"");

    for (const auto& st : stages) {
        const json sec = section(st.c_str());
        try {
            StageResult r;
            if (st == "annotate") {
                AnnotateStage a;
                a.corpus = corpus;
                a.backends = backends;
                a.workers = workers;
                if (sec.contains("kinds")) {
                    a.kinds.clear();
                    for (const auto& k : sec["kinds"]) a.kinds.push_back(annotation_kind_from_string(k.get<std::string>()));
                }
                a.out = out_dir / "annotations.jsonl";
                r = run_annotate(a, log);
                annotations = a.out;
            } else if (st == "simulate") {
                SimulateStage s;
                s.corpus = corpus;
                s.annotations = annotations;
                s.backends = backends;
                s.workers = workers;
                s.method = method_from_string(sec.value("method", std::string("zero_shot")));
                s.system = sec.value("system", std::string());
                s.samples = sec.value("samples", 1);
                if (sec.contains("temperature")) s.temperature = sec["temperature"].get<double>();
                if (sec.contains("min_student_ordinal")) s.min_student_ordinal = sec["min_student_ordinal"].get<int>();
                s.seed = sec.value("seed", std::uint64_t{0});
                s.out = out_dir / "candidates.jsonl";
                r = run_simulate(s, log);
                candidates = s.out;
            } else if (st == "evaluate") {
                if (!candidates) throw PreconditionError("no candidates: run simulate first or set [pipeline].candidates");
                EvaluateStage e;
                e.corpus = corpus;
                e.annotations = annotations;
                e.candidates = *candidates;
                e.backends = backends;
                e.workers = workers;
                e.kt_uses_persona = sec.value("kt_uses_persona", true);
                if (sec.contains("boundaries")) e.boundaries_in = resolve(sec["boundaries"].get<std::string>());
                e.out = out_dir / "reports.jsonl";
                e.boundaries_out = out_dir / "boundaries.json";
                r = run_evaluate(e, log);
                reports = e.out;
            } else if (st == "pairs") {
                if (!candidates || !reports) throw PreconditionError("pairs needs candidates and reports");
                PairsStage p;
                p.corpus = corpus;
                p.annotations = annotations;
                p.candidates = *candidates;
                p.reports = *reports;
                p.reward.epsilon = sec.value("epsilon", p.reward.epsilon);
                p.reward.min_turn_pair = sec.value("min_turn", p.reward.min_turn_pair);
                p.reward.n = sec.value("n", p.reward.n);
                p.reward.strict = sec.value("strict", p.reward.strict);
                if (sec.contains("counting")) p.reward.counting = turn_counting_from_string(sec["counting"].get<std::string>());
                if (sec.contains("metrics")) {
                    p.reward.included.clear();
                    for (const auto& m : sec["metrics"]) p.reward.included.insert(metric_from_string(m.get<std::string>()));
                }
                p.out = out_dir / "pairs.jsonl";
                r = run_pairs(p, log);
            } else if (st == "report") {
                if (!reports) throw PreconditionError("report needs reports: run evaluate first");
                ReportStage rs;
                rs.reports = *reports;
                rs.max_pair_index = sec.value("max_pair_index", rs.max_pair_index);
                if (sec.contains("formats")) {
                    rs.formats.clear();
                    for (const auto& f : sec["formats"]) rs.formats.push_back(emit_format_from_string(f.get<std::string>()));
                }
                rs.out_dir = out_dir / "report";
                r = run_report(rs, log);
            }
            say(log, "[" + st + "] " + (r.cached ? "cached" : "done") + (r.summary.empty() ? "" : ": " + r.summary));
            result.stages.emplace_back(st, std::move(r));
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(st, e.what());
        }
    }
    return result;
}

}  // namespace simeval
