#include "simeval/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "simeval/error.hpp"
#include "simeval/json_io.hpp"

namespace simeval {

namespace {

constexpr std::array<std::pair<AnnotationKind, std::string_view>, 6> kKinds{{
    {AnnotationKind::acts, "acts"},
    {AnnotationKind::correctness, "correctness"},
    {AnnotationKind::kcs, "kcs"},
    {AnnotationKind::persona, "persona"},
    {AnnotationKind::summary, "summary"},
    {AnnotationKind::solution, "solution"},
}};

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::size_t word_count(const std::string& s) {
    std::istringstream is(s);
    std::size_t n = 0;
    std::string w;
    while (is >> w) ++n;
    return n;
}

}  // namespace

std::string_view to_string(FailureFlag f) {
    switch (f) {
        case FailureFlag::acts_failed: return "acts_failed";
        case FailureFlag::correctness_failed: return "correctness_failed";
        case FailureFlag::kcs_failed: return "kcs_failed";
    }
    return "?";
}

std::string_view to_string(AnnotationKind k) {
    for (const auto& [kind, name] : kKinds)
        if (kind == k) return name;
    return "?";
}

AnnotationKind annotation_kind_from_string(std::string_view s) {
    for (const auto& [kind, name] : kKinds)
        if (name == s) return kind;
    throw ParseError("unknown annotation kind \"" + std::string(s) + "\"");
}

std::vector<std::string> check_annotations(const Dialogue& d, const AnnotationSet& a) {
    std::vector<std::string> problems;
    auto speaker_of = [&](int idx) -> std::optional<Speaker> {
        if (idx < 0 || static_cast<std::size_t>(idx) >= d.turns.size()) return std::nullopt;
        return d.turns[idx].speaker;
    };
    for (const auto& [turn, _] : a.acts)
        if (speaker_of(turn) != Speaker::student)
            problems.push_back("act label on non-student turn " + std::to_string(turn));
    for (const auto& [turn, _] : a.correctness)
        if (speaker_of(turn) != Speaker::student)
            problems.push_back("correctness label on non-student turn " + std::to_string(turn));
    for (const auto& [turn, kcs] : a.kcs) {
        if (speaker_of(turn) != Speaker::tutor)
            problems.push_back("KC set on non-tutor turn " + std::to_string(turn));
        for (const auto& kc : kcs)
            if (std::find(d.subjects.begin(), d.subjects.end(), kc) == d.subjects.end())
                problems.push_back("KC \"" + kc + "\" not among dialogue subjects");
    }
    return problems;
}

const Dialogue* Corpus::find(const std::string& id) const {
    for (const auto& d : dialogues)
        if (d.id == id) return &d;
    return nullptr;
}

const AnnotationSet* Corpus::annotations_for(const std::string& id) const {
    auto it = annotations.find(id);
    return it == annotations.end() ? nullptr : &it->second;
}

AnnotationSet& Corpus::annotations_mut(const std::string& id) {
    if (!find(id)) throw PreconditionError("annotation for unknown dialogue " + id);
    return annotations[id];
}

Dialogue dialogue_from_record(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what());
    }
    try {
        return dialogue_from_json(j);
    } catch (const json::exception& e) {
        throw ParseError(e.what());
    }
}

LoadResult load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read corpus " + path.string());

    LoadResult r;
    r.corpus.provenance = {path.string(), utc_now()};
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        Dialogue d;
        try {
            d = dialogue_from_record(line);
        } catch (const Error& e) {
            r.rejected.push_back({lineno, {}, e.what()});
            continue;
        }
        d.turns = merge_bursts(std::move(d.turns));
        if (auto v = validate_dialogue(d); !v.ok()) {
            r.rejected.push_back({lineno, d.id, v.summary()});
            continue;
        }
        if (!seen.insert(d.id).second) {
            r.rejected.push_back({lineno, d.id, "duplicate dialogue id"});
            continue;
        }
        r.corpus.dialogues.push_back(std::move(d));
    }
    return r;
}

void save_corpus(const Corpus& c, const std::filesystem::path& path) {
    std::vector<json> records;
    records.reserve(c.dialogues.size());
    for (const auto& d : c.dialogues) records.push_back(to_json(d));
    write_jsonl(path, records);
}

FilterResult filter_unsolvable(const Corpus& c) {
    FilterResult r;
    r.corpus.provenance = c.provenance;
    for (const auto& d : c.dialogues) {
        const AnnotationSet* a = c.annotations_for(d.id);
        if (!a || !a->solution)
            throw PreconditionError("dialogue " + d.id + " has no solution annotation");
        if (!a->solution->solvable) {
            r.removed_ids.push_back(d.id);
            continue;
        }
        r.corpus.dialogues.push_back(d);
        r.corpus.annotations[d.id] = *a;
    }
    return r;
}

TrainValidation split_train_validation(const Corpus& c, const SplitRequest& req) {
    for (const auto& d : c.dialogues)
        if (d.split != Split::train)
            throw PreconditionError("dialogue " + d.id + " is not in the train split");

    const std::size_t n = c.dialogues.size();
    std::size_t k = req.validation_count
                        ? *req.validation_count
                        : static_cast<std::size_t>(req.validation_fraction * static_cast<double>(n) + 0.5);
    if (k > n)
        throw PreconditionError("corpus of " + std::to_string(n) +
                                " dialogues is smaller than validation size " + std::to_string(k));

    // Order by id first so the draw does not depend on file order.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return c.dialogues[a].id < c.dialogues[b].id; });

    std::mt19937_64 rng(req.seed);
    for (std::size_t i = n; i > 1; --i) {
        // Unbiased draw in [0, i) without relying on the library's distribution implementation.
        const std::uint64_t bound = i;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do x = rng();
        while (x >= limit);
        std::swap(order[i - 1], order[x % bound]);
    }

    std::set<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    TrainValidation out;
    out.train.provenance = out.validation.provenance = c.provenance;
    for (std::size_t i = 0; i < n; ++i) {
        Dialogue d = c.dialogues[i];
        Corpus& target = val.contains(i) ? out.validation : out.train;
        if (val.contains(i)) d.split = Split::validation;
        if (const auto* a = c.annotations_for(d.id)) target.annotations[d.id] = *a;
        target.dialogues.push_back(std::move(d));
    }
    return out;
}

MetricEligibility eligibility(const AnnotationSet& a) {
    MetricEligibility e;
    e.acts = !a.failed(FailureFlag::acts_failed);
    e.correctness = e.errors = !a.failed(FailureFlag::correctness_failed);
    e.knowledge = !a.failed(FailureFlag::kcs_failed);
    return e;
}

EligibilityView::EligibilityView(const Corpus& c) {
    for (const auto& [id, a] : c.annotations) by_id_[id] = eligibility(a);
}

MetricEligibility EligibilityView::operator()(const std::string& dialogue_id) const {
    auto it = by_id_.find(dialogue_id);
    return it == by_id_.end() ? MetricEligibility{} : it->second;
}

EligibilityView drop_failed_annotations(const Corpus& c) { return EligibilityView(c); }

void save_annotations(const std::map<std::string, AnnotationSet>& annotations,
                      const std::filesystem::path& path) {
    std::vector<json> records;
    records.push_back({{"schema", "simeval.annotations"}, {"version", kAnnotationSchemaVersion}});
    for (const auto& [id, a] : annotations) {
        for (auto kind : kAllAnnotationKinds) {
            json payload = annotation_payload(a, kind);
            if (payload.is_null()) continue;
            records.push_back({{"dialogue_id", id}, {"kind", to_string(kind)}, {"payload", payload}});
        }
    }
    write_jsonl(path, records);
}

std::map<std::string, AnnotationSet> load_annotations(const std::filesystem::path& path) {
    auto records = read_jsonl(path);
    std::map<std::string, AnnotationSet> out;
    std::size_t start = 0;
    if (!records.empty() && records[0].contains("schema")) {
        int version = records[0].value("version", -1);
        if (version != kAnnotationSchemaVersion)
            throw ParseError("annotation cache " + path.string() + " has schema version " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kAnnotationSchemaVersion));
        start = 1;
    }
    for (std::size_t i = start; i < records.size(); ++i) {
        const json& r = records[i];
        try {
            auto id = require_string(r, "dialogue_id");
            auto kind = annotation_kind_from_string(require_string(r, "kind"));
            apply_annotation_payload(out[id], kind, require_field(r, "payload"));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

void attach_annotations(Corpus& c, std::map<std::string, AnnotationSet> annotations) {
    for (auto& [id, a] : annotations) {
        if (!c.find(id)) throw PreconditionError("annotation references unknown dialogue " + id);
        c.annotations[id] = std::move(a);
    }
}

CorpusStats corpus_stats(const Corpus& c) {
    CorpusStats s;
    s.dialogues = c.dialogues.size();
    if (c.dialogues.empty()) return s;
    std::set<std::string> subjects;
    std::size_t turns = 0, tutor_first = 0, subject_total = 0;
    std::size_t student_words = 0, student_turns = 0, tutor_words = 0, tutor_turns = 0;
    for (const auto& d : c.dialogues) {
        ++s.per_split[std::string(to_string(d.split))];
        turns += d.turns.size();
        if (!d.turns.empty() && d.turns.front().speaker == Speaker::tutor) ++tutor_first;
        for (const auto& sub : d.subjects) {
            if (sub == kDefaultKc) continue;
            subjects.insert(sub);
            ++subject_total;
        }
        for (const auto& t : d.turns) {
            if (t.speaker == Speaker::student) {
                student_words += word_count(t.text);
                ++student_turns;
            } else {
                tutor_words += word_count(t.text);
                ++tutor_turns;
            }
        }
    }
    const double n = static_cast<double>(c.dialogues.size());
    s.mean_turns = static_cast<double>(turns) / n;
    s.tutor_initiated_pct = 100.0 * static_cast<double>(tutor_first) / n;
    s.unique_subjects = subjects.size();
    s.mean_subjects = static_cast<double>(subject_total) / n;
    if (student_turns) s.mean_student_words = static_cast<double>(student_words) / student_turns;
    if (tutor_turns) s.mean_tutor_words = static_cast<double>(tutor_words) / tutor_turns;
    return s;
}

}  // namespace simeval
