// simeval: annotate, simulate, evaluate, pairs, report, serve-anneval, validate, run.

#include <cstdio>
#include <iostream>
#include <typeinfo>

#include <CLI11.hpp>

#include "simeval/anneval.hpp"
#include "simeval/json_io.hpp"
#include "simeval/pipeline.hpp"

using namespace simeval;
namespace fs = std::filesystem;

namespace {

const char* kind_of(const std::exception& e) {
    if (dynamic_cast<const StageError*>(&e)) return "stage";
    if (dynamic_cast<const IoError*>(&e)) return "io";
    if (dynamic_cast<const ParseError*>(&e)) return "parse";
    if (dynamic_cast<const PreconditionError*>(&e)) return "precondition";
    if (dynamic_cast<const BackendError*>(&e)) return "backend";
    return "internal";
}

int fail(const std::exception& e) {
    json err{{"error", {{"kind", kind_of(e)}, {"message", e.what()}}}};
    if (auto* s = dynamic_cast<const StageError*>(&e)) err["error"]["stage"] = s->stage;
    std::cerr << err.dump() << "\n";
    return 1;
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

std::optional<fs::path> opt(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reference-based evaluation of simulated students in tutoring dialogues"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    std::string backends = "backends.toml";
    int workers = 4;

    // annotate
    AnnotateStage an;
    std::string an_existing;
    std::vector<std::string> an_kinds;
    auto* c_an = app.add_subcommand("annotate", "LLM annotation of acts, correctness, KCs, solutions, personas, summaries");
    c_an->add_option("--corpus", an.corpus, "dialogue JSONL")->required();
    c_an->add_option("--backends", backends, "backend config");
    c_an->add_option("--annotations", an_existing, "existing annotation cache to extend");
    c_an->add_option("--kinds", an_kinds, "subset of acts,correctness,kcs,persona,summary,solution")->delimiter(',');
    c_an->add_option("--workers", workers);
    c_an->add_option("--out", an.out, "annotation JSONL")->required();

    // simulate
    SimulateStage si;
    std::string si_ann, si_method = "zero_shot";
    std::optional<double> si_temp;
    std::optional<int> si_min;
    auto* c_si = app.add_subcommand("simulate", "generate candidate student turns");
    c_si->add_option("--corpus", si.corpus)->required();
    c_si->add_option("--annotations", si_ann);
    c_si->add_option("--backends", backends);
    c_si->add_option("--method", si_method, "sft_backend|zero_shot|ocean|oracle|icl|reasoning");
    c_si->add_option("--system", si.system, "label written to candidates (default: method)");
    c_si->add_option("--samples", si.samples, "candidates per slot; >= 2 samples");
    c_si->add_option("--temperature", si_temp);
    c_si->add_option("--min-student-ordinal", si_min);
    c_si->add_option("--seed", si.seed);
    c_si->add_option("--workers", workers);
    c_si->add_option("--out", si.out)->required();

    // evaluate
    EvaluateStage ev;
    std::string ev_ann, ev_bin, ev_bout;
    bool ev_no_persona = false;
    auto* c_ev = app.add_subcommand("evaluate", "score candidates against ground-truth turns");
    c_ev->add_option("--corpus", ev.corpus)->required();
    c_ev->add_option("--annotations", ev_ann);
    c_ev->add_option("--candidates", ev.candidates)->required();
    c_ev->add_option("--backends", backends);
    c_ev->add_option("--boundaries", ev_bin, "preset knowledge quantile boundaries (JSON)");
    c_ev->add_option("--boundaries-out", ev_bout);
    c_ev->add_flag("--no-kt-persona", ev_no_persona, "omit the persona from knowledge-tracing prompts");
    c_ev->add_option("--workers", workers);
    c_ev->add_option("--out", ev.out)->required();

    // pairs
    PairsStage pa;
    std::string pa_ann, pa_counting = "student_slots";
    std::vector<std::string> pa_metrics;
    bool pa_inclusive = false;
    auto* c_pa = app.add_subcommand("pairs", "build preference pairs from metric reports");
    c_pa->add_option("--reports", pa.reports)->required();
    c_pa->add_option("--candidates", pa.candidates)->required();
    c_pa->add_option("--corpus", pa.corpus)->required();
    c_pa->add_option("--annotations", pa_ann);
    c_pa->add_option("--epsilon", pa.reward.epsilon);
    c_pa->add_option("--min-turn", pa.reward.min_turn_pair);
    c_pa->add_option("--n", pa.reward.n, "expected candidates per slot");
    c_pa->add_option("--counting", pa_counting, "student_slots|turn_pairs|raw_turns");
    c_pa->add_option("--metrics", pa_metrics, "metrics averaged into the reward")->delimiter(',');
    c_pa->add_flag("--inclusive", pa_inclusive, "accept differences equal to epsilon");
    c_pa->add_option("--out", pa.out)->required();

    // report
    ReportStage rp;
    std::string rp_human, rp_study;
    std::vector<std::string> rp_formats;
    auto* c_rp = app.add_subcommand("report", "tables, label distributions, per-turn breakdowns, agreement");
    c_rp->add_option("--reports", rp.reports)->required();
    c_rp->add_option("--human", rp_human, "anneval event log or label JSONL");
    c_rp->add_option("--study", rp_study, "study config used to collect the human labels");
    c_rp->add_option("--formats", rp_formats, "csv,markdown,plotdata-json")->delimiter(',');
    c_rp->add_option("--max-pair-index", rp.max_pair_index);
    c_rp->add_option("--out-dir", rp.out_dir)->required();

    // serve-anneval
    std::string sv_study, sv_host = "127.0.0.1";
    int sv_port = 8080;
    auto* c_sv = app.add_subcommand("serve-anneval", "serve the human evaluation study over HTTP");
    c_sv->add_option("--study", sv_study)->required();
    c_sv->add_option("--host", sv_host);
    c_sv->add_option("--port", sv_port);

    // validate
    std::string va_corpus, va_ann, va_out;
    auto* c_va = app.add_subcommand("validate", "check a corpus (and annotations) and print statistics");
    c_va->add_option("corpus", va_corpus)->required();
    c_va->add_option("--annotations", va_ann);
    c_va->add_option("--out", va_out, "write the summary as JSON");

    // run
    std::string run_config;
    auto* c_run = app.add_subcommand("run", "run the stages of a pipeline config");
    c_run->add_option("config", run_config)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", {{"kind", "usage"}, {"message", e.what()}}}}.dump() << "\n";
        std::cerr << app.help();
        return 2;
    }

    try {
        StageResult r;
        if (c_an->parsed()) {
            an.backends = backends;
            an.workers = workers;
            an.existing = opt(an_existing);
            if (!an_kinds.empty()) {
                an.kinds.clear();
                for (const auto& k : an_kinds) an.kinds.push_back(annotation_kind_from_string(k));
            }
            r = run_annotate(an, log_line);
        } else if (c_si->parsed()) {
            si.backends = backends;
            si.workers = workers;
            si.annotations = opt(si_ann);
            si.method = method_from_string(si_method);
            si.temperature = si_temp;
            si.min_student_ordinal = si_min;
            r = run_simulate(si, log_line);
        } else if (c_ev->parsed()) {
            ev.backends = backends;
            ev.workers = workers;
            ev.annotations = opt(ev_ann);
            ev.boundaries_in = opt(ev_bin);
            ev.boundaries_out = opt(ev_bout);
            ev.kt_uses_persona = !ev_no_persona;
            r = run_evaluate(ev, log_line);
        } else if (c_pa->parsed()) {
            pa.annotations = opt(pa_ann);
            pa.reward.counting = turn_counting_from_string(pa_counting);
            pa.reward.strict = !pa_inclusive;
            if (!pa_metrics.empty()) {
                pa.reward.included.clear();
                for (const auto& m : pa_metrics) pa.reward.included.insert(metric_from_string(m));
            }
            r = run_pairs(pa, log_line);
        } else if (c_rp->parsed()) {
            rp.human = opt(rp_human);
            rp.study = opt(rp_study);
            if (!rp_formats.empty()) {
                rp.formats.clear();
                for (const auto& f : rp_formats) rp.formats.push_back(emit_format_from_string(f));
            }
            r = run_report(rp, log_line);
        } else if (c_sv->parsed()) {
            auto spec = load_study_spec(sv_study);
            Corpus c = load_corpus_with_annotations(spec.corpus, spec.annotations);
            auto study = create_study(c, read_candidates(spec.candidates), spec.config);
            std::vector<MetricReport> reports;
            if (spec.reports) reports = read_reports(*spec.reports);
            AnnevalService service(std::move(study), std::move(c), std::move(reports), spec.tokens, spec.log);
            AnnevalHttpServer server(service);
            std::cerr << "anneval: " << service.study().unique_turns() << " turns, " << service.study().overlap_turns()
                      << " shared; listening on " << sv_host << ":" << sv_port << "\n";
            server.listen(sv_host, sv_port);
            return 0;
        } else if (c_va->parsed()) {
            auto s = run_validate(va_corpus, opt(va_ann));
            json summary{{"loaded", s.loaded},
                         {"rejected", json::array()},
                         {"annotation_violations", s.annotation_violations},
                         {"stats",
                          {{"dialogues", s.stats.dialogues},
                           {"per_split", s.stats.per_split},
                           {"mean_turns", s.stats.mean_turns},
                           {"tutor_initiated_pct", s.stats.tutor_initiated_pct},
                           {"unique_subjects", s.stats.unique_subjects},
                           {"mean_subjects", s.stats.mean_subjects},
                           {"mean_student_words", s.stats.mean_student_words},
                           {"mean_tutor_words", s.stats.mean_tutor_words}}}};
            for (const auto& rej : s.rejected)
                summary["rejected"].push_back({{"line", rej.line}, {"dialogue_id", rej.dialogue_id}, {"reason", rej.reason}});
            std::cout << summary.dump(2) << "\n";
            if (!va_out.empty()) {
                RunManifest m;
                m.command = "validate";
                m.config_hash = sha256_hex(va_ann);
                m.inputs[va_corpus] = file_sha256(va_corpus);
                if (!va_ann.empty()) m.inputs[va_ann] = file_sha256(va_ann);
                write_text(va_out, summary.dump(2) + "\n");
                m.outputs[va_out] = file_sha256(va_out);
                write_manifests(m);
            }
            return s.rejected.empty() && s.annotation_violations.empty() ? 0 : 1;
        } else if (c_run->parsed()) {
            run_pipeline(run_config, log_line);
            return 0;
        }
        if (!r.summary.empty()) std::cerr << r.summary << (r.cached ? " (cached)" : "") << "\n";
        return 0;
    } catch (const std::exception& e) {
        return fail(e);
    }
}
