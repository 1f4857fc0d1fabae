#include "simeval/anneval.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <limits>
#include <random>
#include <unistd.h>

#include "simeval/backends.hpp"
#include "simeval/config.hpp"
#include "simeval/json_io.hpp"
#include "simeval/report.hpp"

namespace simeval {

namespace {

std::size_t draw_below(std::mt19937_64& rng, std::size_t bound) {
    const std::uint64_t b = bound;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % b;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return static_cast<std::size_t>(x % b);
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_below(rng, i)]);
}

std::string turn_key(const std::string& dialogue_id, int turn_index) {
    return dialogue_id + ":" + std::to_string(turn_index);
}

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int position(const StudentSlot& s, TurnCounting counting) {
    switch (counting) {
        case TurnCounting::student_slots: return s.student_ordinal;
        case TurnCounting::turn_pairs: return s.pair_index;
        case TurnCounting::raw_turns: return s.turn_index;
    }
    return s.student_ordinal;
}

}  // namespace

// ---------------------------------------------------------------------------
// Study assembly

const StudySession* Study::session(const std::string& annotator) const {
    for (const auto& s : sessions)
        if (s.annotator == annotator) return &s;
    return nullptr;
}

std::size_t Study::unique_turns() const {
    std::set<std::string> keys;
    for (const auto& s : sessions)
        for (const auto& t : s.tasks)
            if (t.kind == TaskKind::ground_truth) keys.insert(turn_key(t.dialogue_id, t.turn_index));
    return keys.size();
}

std::size_t Study::overlap_turns() const {
    std::set<std::string> keys;
    for (const auto& s : sessions)
        for (const auto& t : s.tasks)
            if (t.kind == TaskKind::ground_truth && t.overlap) keys.insert(turn_key(t.dialogue_id, t.turn_index));
    return keys.size();
}

Study create_study(const Corpus& c, const std::vector<CandidateTurn>& candidates, const StudyConfig& cfg) {
    if (cfg.dialogues < 1 || cfg.turns_per_dialogue < 1) throw PreconditionError("study needs dialogues and turns");
    if (cfg.methods.empty()) throw PreconditionError("study needs at least one method");
    if (cfg.annotators.empty()) throw PreconditionError("study needs at least one annotator");
    if (cfg.overlap_dialogues < 0 || cfg.overlap_dialogues > cfg.dialogues)
        throw PreconditionError("overlap dialogues out of range");
    if (cfg.overlap_dialogues > 0 && cfg.annotators.size() < 2)
        throw PreconditionError("overlap needs at least two annotators");
    if (std::set<std::string>(cfg.methods.begin(), cfg.methods.end()).size() != cfg.methods.size())
        throw PreconditionError("duplicate study method");

    // (dialogue:turn, method) -> candidate text; sample 0 preferred.
    std::map<std::pair<std::string, std::string>, const CandidateTurn*> cand;
    for (const auto& x : candidates) {
        auto& slot = cand[{turn_key(x.dialogue_id, x.turn_index), x.group_key()}];
        if (!slot || x.sample_id < slot->sample_id) slot = &x;
    }

    std::vector<std::string> ids;
    for (const auto& d : c.dialogues) ids.push_back(d.id);
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(cfg.seed);

    std::map<std::string, std::vector<std::vector<StudentSlot>>> windows;
    std::vector<std::string> eligible;
    for (const auto& id : ids) {
        const Dialogue* d = c.find(id);
        auto slots = student_turn_slots(*d);
        std::vector<std::vector<StudentSlot>> ok;
        const auto w = static_cast<std::size_t>(cfg.turns_per_dialogue);
        for (std::size_t start = 0; start + w <= slots.size(); ++start) {
            bool good = true;
            for (std::size_t k = start; k < start + w && good; ++k) {
                good = position(slots[k], cfg.counting) >= cfg.min_position;
                for (const auto& m : cfg.methods)
                    good = good && cand.contains({turn_key(id, slots[k].turn_index), m});
            }
            if (good) ok.emplace_back(slots.begin() + static_cast<std::ptrdiff_t>(start),
                                      slots.begin() + static_cast<std::ptrdiff_t>(start + w));
        }
        if (!ok.empty()) {
            eligible.push_back(id);
            windows[id] = std::move(ok);
        }
    }
    if (eligible.size() < static_cast<std::size_t>(cfg.dialogues))
        throw PreconditionError("insufficient eligible dialogues: need " + std::to_string(cfg.dialogues) + ", found " +
                                std::to_string(eligible.size()) + " with " + std::to_string(cfg.turns_per_dialogue) +
                                " consecutive student turns at position >= " + std::to_string(cfg.min_position));

    shuffle(eligible, rng);
    eligible.resize(static_cast<std::size_t>(cfg.dialogues));

    Study study;
    study.config = cfg;
    for (const auto& a : cfg.annotators) study.sessions.push_back({a, {}, {}});

    for (std::size_t i = 0; i < eligible.size(); ++i) {
        const auto& id = eligible[i];
        const auto& options = windows[id];
        const auto& window = options[draw_below(rng, options.size())];
        const bool overlap = static_cast<int>(i) < cfg.overlap_dialogues;
        if (overlap) study.overlap_dialogues.insert(id);

        std::vector<StudyTask> tasks;
        for (const auto& s : window) {
            std::string text;
            for (const auto& t : c.find(id)->turns)
                if (t.index == s.turn_index) text = t.text;
            tasks.push_back({turn_key(id, s.turn_index) + ":gt", id, s.turn_index, s.pair_index, TaskKind::ground_truth,
                             {}, text, overlap});
        }
        for (const auto& s : window) {
            std::vector<std::string> order = cfg.methods;
            shuffle(order, rng);
            for (std::size_t k = 0; k < order.size(); ++k) {
                const auto* x = cand.at({turn_key(id, s.turn_index), order[k]});
                tasks.push_back({turn_key(id, s.turn_index) + ":s" + std::to_string(k + 1), id, s.turn_index,
                                 s.pair_index, TaskKind::simulated, order[k], x->text, overlap});
            }
        }

        std::vector<std::size_t> owners;
        if (overlap) {
            owners = {0, 1};
        } else {
            owners = {(i - static_cast<std::size_t>(cfg.overlap_dialogues)) % cfg.annotators.size()};
        }
        for (auto o : owners) {
            study.sessions[o].dialogue_ids.push_back(id);
            for (const auto& t : tasks) study.sessions[o].tasks.push_back(t);
        }
    }

    json fp = json::array();
    for (const auto& s : study.sessions) {
        json tasks = json::array();
        for (const auto& t : s.tasks) tasks.push_back({t.task_id, t.method, t.text});
        fp.push_back({{"annotator", s.annotator}, {"tasks", std::move(tasks)}});
    }
    study.fingerprint = sha256_hex(dump_line(fp));
    return study;
}

// ---------------------------------------------------------------------------
// Labels

json to_json(const HumanLabel& l) {
    json j{{"annotator", l.annotator},
           {"task_id", l.task_id},
           {"act", std::string(to_string(l.act))},
           {"correctness", std::string(to_string(l.correctness))},
           {"timestamp", l.timestamp}};
    if (l.same_error) j["same_error"] = *l.same_error;
    if (l.linguistic) j["linguistic"] = *l.linguistic;
    return j;
}

HumanLabel human_label_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("label must be a JSON object");
    static const std::set<std::string> allowed{"annotator", "task_id", "act", "correctness",
                                               "same_error", "linguistic", "timestamp"};
    for (const auto& [k, v] : j.items())
        if (!allowed.contains(k)) throw ParseError("unexpected label field \"" + k + "\"");
    HumanLabel l;
    l.annotator = j.value("annotator", std::string());
    l.task_id = require_string(j, "task_id");
    l.act = act_from_string(require_string(j, "act"));
    l.correctness = correctness_from_string(require_string(j, "correctness"));
    if (j.contains("same_error")) {
        if (!j["same_error"].is_boolean()) throw ParseError("same_error must be a boolean");
        l.same_error = j["same_error"].get<bool>();
    }
    if (j.contains("linguistic")) {
        if (!j["linguistic"].is_number_integer()) throw ParseError("linguistic must be an integer");
        l.linguistic = j["linguistic"].get<int>();
    }
    l.timestamp = j.value("timestamp", std::string());
    return l;
}

json task_payload(const Study& study, const Corpus& corpus, const StudySession& s, std::size_t index,
                  std::optional<CorrectnessLabel> reference_correctness) {
    const auto& t = s.tasks.at(index);
    const Dialogue* d = corpus.find(t.dialogue_id);
    if (!d) throw PreconditionError("study dialogue missing from corpus: " + t.dialogue_id);
    json options = json::array();
    for (const auto& o : d->question.options) options.push_back(o);
    json context = json::array();
    std::string reference;
    for (const auto& turn : d->turns) {
        if (turn.index == t.turn_index) reference = turn.text;
        if (turn.index >= t.turn_index) break;
        context.push_back({{"turn_index", turn.index}, {"speaker", std::string(to_string(turn.speaker))}, {"text", turn.text}});
    }
    const bool sim = t.kind == TaskKind::simulated;
    json required = json::array({"act", "correctness"});
    if (sim) required.push_back("linguistic");
    json p{{"task_id", t.task_id},
           {"dialogue_id", t.dialogue_id},
           {"turn_index", t.turn_index},
           {"ground_truth", !sim},
           {"question", {{"stem", d->question.stem}, {"options", std::move(options)}}},
           {"context", std::move(context)},
           {"turn_text", t.text},
           {"required_fields", std::move(required)},
           {"progress", {{"done", index}, {"total", s.tasks.size()}}}};
    if (sim) {
        p["reference_turn"] = reference;
        p["reference_correctness"] =
            reference_correctness ? json(std::string(to_string(*reference_correctness))) : json(nullptr);
        p["same_error_if_incorrect"] = reference_correctness == CorrectnessLabel::incorrect;
    }
    (void)study;
    return p;
}

StudyState::StudyState(const Study& study, const Corpus& corpus, std::filesystem::path log_path, Clock clock)
    : study_(study), corpus_(corpus), log_path_(std::move(log_path)), clock_(std::move(clock)) {
    if (!clock_) clock_ = utc_now;
    for (const auto& s : study_.sessions) cursor_[s.annotator] = 0;

    bool have_header = false;
    if (std::filesystem::exists(log_path_)) {
        std::size_t line = 0;
        for (const auto& ev : read_jsonl(log_path_)) {
            ++line;
            const auto kind = ev.value("event", std::string());
            if (kind == "study") {
                if (ev.value("fingerprint", std::string()) != study_.fingerprint)
                    throw PreconditionError(log_path_.string() + ": event log belongs to a different study assignment");
                have_header = true;
            } else if (kind == "label") {
                if (!have_header) throw ParseError(log_path_.string() + ": label before study header");
                try {
                    auto raw = ev.at("label");
                    auto l = validate(raw.at("annotator").get<std::string>(), raw, raw.value("timestamp", ""));
                    apply(l);
                } catch (const std::exception& e) {
                    throw ParseError(log_path_.string() + ":" + std::to_string(line) + ": replay failed: " + e.what());
                }
            } else {
                throw ParseError(log_path_.string() + ":" + std::to_string(line) + ": unknown event \"" + kind + "\"");
            }
        }
    }
    if (log_path_.has_parent_path()) std::filesystem::create_directories(log_path_.parent_path());
    log_ = std::fopen(log_path_.c_str(), "ab");
    if (!log_) throw IoError("cannot open event log " + log_path_.string());
    if (!have_header) append_event({{"event", "study"}, {"fingerprint", study_.fingerprint}, {"seed", study_.config.seed}});
}

StudyState::~StudyState() {
    if (log_) std::fclose(log_);
}

std::size_t StudyState::cursor(const std::string& annotator) const {
    auto it = cursor_.find(annotator);
    if (it == cursor_.end()) throw LabelRejected(404, "unknown annotator " + annotator);
    return it->second;
}

json StudyState::next_task(const std::string& annotator) const {
    const auto* s = study_.session(annotator);
    if (!s) throw LabelRejected(404, "unknown annotator " + annotator);
    const auto i = cursor(annotator);
    if (i >= s->tasks.size()) return {{"complete", true}, {"progress", {{"done", i}, {"total", s->tasks.size()}}}};
    const auto& t = s->tasks[i];
    std::optional<CorrectnessLabel> ref;
    if (auto it = gt_correctness_.find({annotator, turn_key(t.dialogue_id, t.turn_index)}); it != gt_correctness_.end())
        ref = it->second;
    return task_payload(study_, corpus_, *s, i, ref);
}

json StudyState::session_summary(const std::string& annotator) const {
    const auto* s = study_.session(annotator);
    if (!s) throw LabelRejected(404, "unknown annotator " + annotator);
    const auto i = cursor(annotator);
    return {{"annotator", annotator},
            {"dialogues", s->dialogue_ids},
            {"total", s->tasks.size()},
            {"done", i},
            {"complete", i >= s->tasks.size()}};
}

HumanLabel StudyState::validate(const std::string& annotator, const json& body, std::string timestamp) const {
    HumanLabel l;
    try {
        l = human_label_from_json(body);
    } catch (const Error& e) {
        throw LabelRejected(400, e.what());
    }
    if (!l.annotator.empty() && l.annotator != annotator)
        throw LabelRejected(400, "label annotator does not match the authenticated annotator");
    l.annotator = annotator;
    l.timestamp = std::move(timestamp);

    const auto* s = study_.session(annotator);
    if (!s) throw LabelRejected(404, "unknown annotator " + annotator);
    auto it = std::find_if(s->tasks.begin(), s->tasks.end(), [&](const auto& t) { return t.task_id == l.task_id; });
    if (it == s->tasks.end()) throw LabelRejected(404, "task " + l.task_id + " is not assigned to " + annotator);
    const auto index = static_cast<std::size_t>(it - s->tasks.begin());
    const auto cur = cursor(annotator);
    if (index < cur) throw LabelRejected(409, "task " + l.task_id + " already labeled by " + annotator);
    if (index > cur) throw LabelRejected(409, "task " + l.task_id + " is out of order; next is " + s->tasks[cur].task_id);

    const auto& t = *it;
    if (t.kind == TaskKind::ground_truth) {
        if (l.linguistic) throw LabelRejected(400, "linguistic rating is not allowed on a ground-truth task");
        if (l.same_error) throw LabelRejected(400, "same_error is not allowed on a ground-truth task");
    } else {
        if (!l.linguistic) throw LabelRejected(400, "simulated task requires a linguistic rating");
        if (*l.linguistic < 1 || *l.linguistic > 5) throw LabelRejected(400, "linguistic rating must be 1..5");
        auto ref = gt_correctness_.find({annotator, turn_key(t.dialogue_id, t.turn_index)});
        const bool needs = l.correctness == CorrectnessLabel::incorrect && ref != gt_correctness_.end() &&
                           ref->second == CorrectnessLabel::incorrect;
        if (needs && !l.same_error) throw LabelRejected(400, "same_error is required when both turns are incorrect");
        if (!needs && l.same_error) throw LabelRejected(400, "same_error is only allowed when both turns are incorrect");
    }
    return l;
}

void StudyState::apply(const HumanLabel& l) {
    const auto* s = study_.session(l.annotator);
    const auto& t = s->tasks[cursor_[l.annotator]];
    if (t.kind == TaskKind::ground_truth) gt_correctness_[{l.annotator, turn_key(t.dialogue_id, t.turn_index)}] = l.correctness;
    ++cursor_[l.annotator];
    labels_.push_back(l);
}

void StudyState::append_event(const json& event) {
    const std::string line = dump_line(event) + "\n";
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0 ||
        ::fsync(::fileno(log_)) != 0)
        throw IoError("cannot append to event log " + log_path_.string());
}

HumanLabel StudyState::submit(const std::string& annotator, const json& body) {
    auto l = validate(annotator, body, clock_());
    append_event({{"event", "label"}, {"label", to_json(l)}});
    apply(l);
    return l;
}

// ---------------------------------------------------------------------------
// Agreement

namespace {

AgreementCell kappa_cell(const std::vector<std::string>& a, const std::vector<std::string>& b, const char* what) {
    AgreementCell c;
    c.n = a.size();
    if (c.n < 2) c.note = std::string("fewer than 2 paired ") + what;
    else c.value = cohen_kappa(a, b);
    return c;
}

AgreementCell pearson_cell(const std::vector<double>& a, const std::vector<double>& b) {
    AgreementCell c;
    c.n = a.size();
    if (c.n < 2) {
        c.note = "fewer than 2 paired ratings";
        return c;
    }
    c.value = pearson_r(a, b);
    if (!c.value) c.note = "zero variance";
    return c;
}

AgreementCell mean_cell(const std::vector<double>& v) {
    AgreementCell c;
    c.n = v.size();
    if (v.empty()) {
        c.note = "no labeled tasks";
        return c;
    }
    double s = 0;
    for (double x : v) s += x;
    c.value = s / static_cast<double>(v.size());
    return c;
}

std::string error_label(bool same) { return same ? "same" : "different"; }

}  // namespace

AgreementTable compute_agreement(const Study& study, const std::vector<HumanLabel>& labels,
                                 const std::vector<MetricReport>& reports, const Corpus& corpus) {
    std::map<std::string, const StudyTask*> tasks;
    for (const auto& s : study.sessions)
        for (const auto& t : s.tasks) tasks[t.task_id] = &t;

    std::map<std::tuple<std::string, int, std::string>, const MetricReport*> by_key;
    for (const auto& r : reports) {
        auto& slot = by_key[{r.dialogue_id, r.turn_index, r.group_key()}];
        if (!slot || r.sample_id < slot->sample_id) slot = &r;
    }

    // The annotator's own ground-truth labels per turn.
    std::map<std::pair<std::string, std::string>, const HumanLabel*> gt_by;
    for (const auto& l : labels) {
        auto it = tasks.find(l.task_id);
        if (it != tasks.end() && it->second->kind == TaskKind::ground_truth)
            gt_by[{l.annotator, turn_key(it->second->dialogue_id, it->second->turn_index)}] = &l;
    }

    std::vector<std::string> hm_act_h, hm_act_m, hm_cor_h, hm_cor_m, hm_err_h, hm_err_m;
    std::vector<double> hm_ling_h, hm_ling_m;
    std::vector<std::string> ha_act_h, ha_act_m, ha_cor_h, ha_cor_m;
    std::map<std::string, std::vector<double>> ms_act, ms_cor, ms_err, ms_ling;
    std::map<std::string, std::vector<const HumanLabel*>> by_task;

    for (const auto& l : labels) {
        auto it = tasks.find(l.task_id);
        if (it == tasks.end()) continue;
        const auto& t = *it->second;
        by_task[t.task_id].push_back(&l);
        if (t.kind == TaskKind::ground_truth) {
            const auto* a = corpus.annotations_for(t.dialogue_id);
            if (a && a->acts.contains(t.turn_index)) {
                ha_act_h.emplace_back(to_string(l.act));
                ha_act_m.emplace_back(to_string(a->acts.at(t.turn_index)));
            }
            if (a && a->correctness.contains(t.turn_index)) {
                ha_cor_h.emplace_back(to_string(l.correctness));
                ha_cor_m.emplace_back(to_string(a->correctness.at(t.turn_index)));
            }
            continue;
        }

        const HumanLabel* gt = nullptr;
        if (auto g = gt_by.find({l.annotator, turn_key(t.dialogue_id, t.turn_index)}); g != gt_by.end()) gt = g->second;
        if (gt) {
            ms_act[t.method].push_back(l.act == gt->act ? 1.0 : 0.0);
            if (gt->correctness != CorrectnessLabel::na)
                ms_cor[t.method].push_back(l.correctness == gt->correctness ? 1.0 : 0.0);
            if (gt->correctness == CorrectnessLabel::incorrect)
                ms_err[t.method].push_back(l.correctness == CorrectnessLabel::incorrect && l.same_error.value_or(false) ? 1.0 : 0.0);
        }
        if (l.linguistic) ms_ling[t.method].push_back(*l.linguistic);

        auto r = by_key.find({t.dialogue_id, t.turn_index, t.method});
        if (r == by_key.end()) continue;
        const auto& rep = *r->second;
        if (rep.labels.act) {
            hm_act_h.emplace_back(to_string(l.act));
            hm_act_m.emplace_back(to_string(*rep.labels.act));
        }
        if (rep.labels.correctness) {
            hm_cor_h.emplace_back(to_string(l.correctness));
            hm_cor_m.emplace_back(to_string(*rep.labels.correctness));
        }
        if (gt && gt->correctness == CorrectnessLabel::incorrect && rep.at(Metric::errors).applicable()) {
            hm_err_h.push_back(error_label(l.correctness == CorrectnessLabel::incorrect && l.same_error.value_or(false)));
            hm_err_m.push_back(error_label(*rep.at(Metric::errors).value >= 0.5));
        }
        if (l.linguistic && rep.at(Metric::cos_sim).applicable()) {
            hm_ling_h.push_back(*l.linguistic);
            hm_ling_m.push_back(*rep.at(Metric::cos_sim).value);
        }
    }

    // Human-human on tasks labeled by two annotators.
    std::vector<std::string> hh_act_a, hh_act_b, hh_cor_a, hh_cor_b, hh_err_a, hh_err_b;
    std::vector<double> hh_ling_a, hh_ling_b;
    for (const auto& [id, ls] : by_task) {
        if (ls.size() < 2) continue;
        const auto& a = *ls[0];
        const auto& b = *ls[1];
        const auto& t = *tasks.at(id);
        hh_act_a.emplace_back(to_string(a.act));
        hh_act_b.emplace_back(to_string(b.act));
        hh_cor_a.emplace_back(to_string(a.correctness));
        hh_cor_b.emplace_back(to_string(b.correctness));
        if (t.kind == TaskKind::simulated) {
            if (a.linguistic && b.linguistic) {
                hh_ling_a.push_back(*a.linguistic);
                hh_ling_b.push_back(*b.linguistic);
            }
            if (a.same_error && b.same_error) {
                hh_err_a.push_back(error_label(*a.same_error));
                hh_err_b.push_back(error_label(*b.same_error));
            }
        }
    }

    AgreementTable out;
    out.cells["human_metric.acts"] = kappa_cell(hm_act_h, hm_act_m, "act labels");
    out.cells["human_metric.correctness"] = kappa_cell(hm_cor_h, hm_cor_m, "correctness labels");
    out.cells["human_metric.errors"] = kappa_cell(hm_err_h, hm_err_m, "error judgments on incorrect ground-truth turns");
    out.cells["human_metric.linguistic"] = pearson_cell(hm_ling_h, hm_ling_m);
    out.cells["human_annotation.acts"] = kappa_cell(ha_act_h, ha_act_m, "act labels");
    out.cells["human_annotation.correctness"] = kappa_cell(ha_cor_h, ha_cor_m, "correctness labels");
    out.cells["human_human.acts"] = kappa_cell(hh_act_a, hh_act_b, "act labels");
    out.cells["human_human.correctness"] = kappa_cell(hh_cor_a, hh_cor_b, "correctness labels");
    out.cells["human_human.errors"] = kappa_cell(hh_err_a, hh_err_b, "error judgments");
    out.cells["human_human.linguistic"] = pearson_cell(hh_ling_a, hh_ling_b);
    for (const auto& m : study.config.methods) {
        out.method_scores[m]["acts"] = mean_cell(ms_act[m]);
        out.method_scores[m]["correctness"] = mean_cell(ms_cor[m]);
        out.method_scores[m]["errors"] = mean_cell(ms_err[m]);
        out.method_scores[m]["linguistic"] = mean_cell(ms_ling[m]);
    }
    return out;
}

json to_json(const AgreementTable& t) {
    auto cell = [](const AgreementCell& c) {
        json j{{"value", c.value ? json(*c.value) : json(nullptr)}, {"n", c.n}, {"defined", c.value.has_value()}};
        if (!c.note.empty()) j["note"] = c.note;
        return j;
    };
    json cells = json::object();
    for (const auto& [k, c] : t.cells) cells[k] = cell(c);
    json methods = json::object();
    for (const auto& [m, row] : t.method_scores)
        for (const auto& [k, c] : row) methods[m][k] = cell(c);
    return {{"cells", std::move(cells)}, {"method_scores", std::move(methods)}};
}

// ---------------------------------------------------------------------------
// Study spec

StudySpec load_study_spec(const std::filesystem::path& path) {
    const json doc = load_config_document(path);
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    auto resolve = [&](const std::string& p) {
        std::filesystem::path x(p);
        return x.is_absolute() ? x : base / x;
    };
    StudySpec spec;
    try {
        const auto& s = doc.at("study");
        spec.corpus = resolve(s.at("corpus").get<std::string>());
        spec.candidates = resolve(s.at("candidates").get<std::string>());
        spec.log = resolve(s.at("log").get<std::string>());
        if (s.contains("annotations")) spec.annotations = resolve(s["annotations"].get<std::string>());
        if (s.contains("reports")) spec.reports = resolve(s["reports"].get<std::string>());
        auto& cfg = spec.config;
        cfg.dialogues = s.value("dialogues", cfg.dialogues);
        cfg.turns_per_dialogue = s.value("turns_per_dialogue", cfg.turns_per_dialogue);
        cfg.overlap_dialogues = s.value("overlap_dialogues", cfg.overlap_dialogues);
        cfg.min_position = s.value("min_position", cfg.min_position);
        if (s.contains("counting")) cfg.counting = turn_counting_from_string(s["counting"].get<std::string>());
        if (s.contains("methods")) cfg.methods = s["methods"].get<std::vector<std::string>>();
        cfg.seed = s.value("seed", cfg.seed);
        cfg.annotators.clear();
        for (const auto& a : doc.at("annotators")) {
            auto id = a.at("id").get<std::string>();
            auto token = a.at("token").get<std::string>();
            if (token.empty()) throw ParseError("annotator " + id + " has an empty token");
            if (!spec.tokens.emplace(token, id).second) throw ParseError("duplicate annotator token");
            cfg.annotators.push_back(id);
        }
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Service

AnnevalService::AnnevalService(Study study, Corpus corpus, std::vector<MetricReport> reports,
                               std::map<std::string, std::string> tokens, std::filesystem::path log_path,
                               StudyState::Clock clock)
    : study_(std::move(study)), corpus_(std::move(corpus)), reports_(std::move(reports)), tokens_(std::move(tokens)) {
    state_ = std::make_unique<StudyState>(study_, corpus_, std::move(log_path), std::move(clock));
}

std::optional<std::string> AnnevalService::authenticate(const std::string& authorization) const {
    const std::string prefix = "Bearer ";
    if (authorization.rfind(prefix, 0) != 0) return std::nullopt;
    auto it = tokens_.find(trim(authorization.substr(prefix.size())));
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
}

std::vector<HumanLabel> AnnevalService::labels() const {
    std::lock_guard lock(mu_);
    return state_->labels();
}

HttpReply AnnevalService::handle(const std::string& method, const std::string& path, const std::string& authorization,
                                 const std::string& body) {
    auto who = authenticate(authorization);
    if (!who) return {401, {{"error", "missing or invalid bearer token"}}};
    std::lock_guard lock(mu_);
    try {
        if (method == "GET" && path == "/session") return {200, state_->session_summary(*who)};
        if (method == "GET" && path == "/task/next") return {200, state_->next_task(*who)};
        if (method == "POST" && path == "/label") {
            json j;
            try {
                j = json::parse(body);
            } catch (const json::exception& e) {
                return {400, {{"error", std::string("malformed JSON: ") + e.what()}}};
            }
            auto l = state_->submit(*who, j);
            return {200, {{"ack", true}, {"task_id", l.task_id}, {"timestamp", l.timestamp}}};
        }
        if (method == "GET" && path == "/agreement")
            return {200, to_json(compute_agreement(study_, state_->labels(), reports_, corpus_))};
    } catch (const LabelRejected& e) {
        return {e.status, {{"error", e.what()}}};
    } catch (const Error& e) {
        return {500, {{"error", e.what()}}};
    }
    return {404, {{"error", "no route " + method + " " + path}}};
}

}  // namespace simeval
