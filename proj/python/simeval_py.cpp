// Python bindings over the scoring, pairing, agreement and pipeline entry points.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "simeval/corpus.hpp"
#include "simeval/metrics.hpp"
#include "simeval/pipeline.hpp"
#include "simeval/report.hpp"
#include "simeval/rl_data.hpp"

namespace py = pybind11;
using namespace simeval;

namespace {

QuantileBoundaries boundaries(const std::array<double, 4>& upper) {
    QuantileBoundaries b;
    b.upper = upper;
    return b;
}

std::vector<py::tuple> preference_pairs(const std::vector<double>& rewards, int student_ordinal, double epsilon,
                                        bool strict, int min_turn, const std::string& counting) {
    RewardConfig cfg;
    cfg.epsilon = epsilon;
    cfg.strict = strict;
    cfg.min_turn_pair = min_turn;
    cfg.n = static_cast<int>(rewards.size());
    cfg.counting = turn_counting_from_string(counting);
    cfg.validate();
    SlotCandidates s;
    s.dialogue_id = "py";
    s.student_ordinal = student_ordinal;
    s.pair_index = student_ordinal + 1;
    s.turn_index = 2 * student_ordinal + 1;
    for (std::size_t i = 0; i < rewards.size(); ++i)
        s.candidates.push_back({std::to_string(i), rewards[i], static_cast<int>(i)});
    std::vector<py::tuple> out;
    for (const auto& p : build_preference_pairs(s, cfg))
        out.push_back(py::make_tuple(std::stoi(p.chosen), std::stoi(p.rejected), p.margin));
    return out;
}

py::dict stats(const std::filesystem::path& corpus) {
    auto r = load_corpus(corpus);
    auto s = corpus_stats(r.corpus);
    py::dict d;
    d["dialogues"] = s.dialogues;
    d["per_split"] = s.per_split;
    d["mean_turns"] = s.mean_turns;
    d["tutor_initiated_pct"] = s.tutor_initiated_pct;
    d["unique_subjects"] = s.unique_subjects;
    d["rejected"] = r.rejected.size();
    return d;
}

std::vector<py::tuple> pipeline(const std::filesystem::path& config) {
    std::vector<py::tuple> out;
    for (const auto& [name, r] : run_pipeline(config).stages) {
        std::vector<std::string> paths;
        for (const auto& p : r.outputs) paths.push_back(p.string());
        out.push_back(py::make_tuple(name, r.cached, paths));
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(simeval, m) {
    m.doc() = "Reference-based evaluation of simulated students";
    m.attr("__version__") = std::string(kToolVersion);

    py::register_exception<Error>(m, "Error");

    m.def("rouge_tokenize", [](const std::string& s) { return rouge_tokenize(s); });
    m.def("rouge_l", [](const std::string& candidate, const std::string& reference) {
        return rouge_l(candidate, reference);
    }, py::arg("candidate"), py::arg("reference"));
    m.def("lcs_length", [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        return lcs_length(a, b);
    });
    m.def("knowledge_similarity", &knowledge_similarity, py::arg("ground_truth"), py::arg("candidate"));
    m.def("fit_quantile_boundaries", [](std::vector<double> v) {
        return fit_quantile_boundaries(std::move(v)).upper;
    });
    m.def("quantize", [](double delta, const std::array<double, 4>& upper) { return quantize(delta, boundaries(upper)); },
          py::arg("delta"), py::arg("upper"));
    m.def("cohen_kappa", [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        return cohen_kappa(a, b);
    });
    m.def("pearson_r", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson_r(x, y); });
    m.def("tutor_response_likelihood", [](const std::vector<double>& lp) { return tutor_response_likelihood(lp); });
    m.def("preference_pairs", &preference_pairs, py::arg("rewards"), py::arg("student_ordinal"),
          py::arg("epsilon") = 0.1, py::arg("strict") = true, py::arg("min_turn") = 5,
          py::arg("counting") = "student_slots",
          "(chosen index, rejected index, margin) for one slot, largest margin first.");
    m.def("corpus_stats", &stats, py::arg("corpus"));
    m.def("run_pipeline", &pipeline, py::arg("config"), "Runs a pipeline config; returns (stage, cached, outputs).");
}
