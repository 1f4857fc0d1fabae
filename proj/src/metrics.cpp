#include "simeval/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include "simeval/annotate.hpp"
#include "simeval/error.hpp"
#include "simeval/json_io.hpp"
#include "simeval/prompts.hpp"

namespace simeval {

std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::acts: return "acts";
        case Metric::correctness: return "correctness";
        case Metric::errors: return "errors";
        case Metric::knowledge: return "knowledge";
        case Metric::cos_sim: return "cos_sim";
        case Metric::rouge_l: return "rouge_l";
        case Metric::tutor_resp: return "tutor_resp";
    }
    return "?";
}

Metric metric_from_string(std::string_view s) {
    for (auto m : kAllMetrics)
        if (to_string(m) == s) return m;
    throw ParseError("unknown metric \"" + std::string(s) + "\"");
}

namespace {

std::optional<int> answer_of(const Dialogue& d, const AnnotationSet* a) {
    if (a && a->solution) return a->solution->correct_option;
    return d.question.correct_option;
}

const Turn& turn_at(const Dialogue& d, int index) {
    for (const auto& t : d.turns)
        if (t.index == index) return t;
    throw PreconditionError("dialogue " + d.id + " has no turn " + std::to_string(index));
}

std::vector<Turn> with_student(std::span<const Turn> prefix, int index, const std::string& text) {
    std::vector<Turn> v(prefix.begin(), prefix.end());
    v.push_back({index, Speaker::student, text});
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Report serialization

nlohmann::json to_json(const MetricReport& r) {
    json m = json::object();
    for (auto k : kAllMetrics) {
        const auto& v = r.at(k);
        json e{{"value", v.value ? json(*v.value) : json(nullptr)}, {"applicable", v.applicable()}};
        if (!v.applicable() && !v.reason.empty()) e["reason"] = v.reason;
        m[std::string(to_string(k))] = std::move(e);
    }
    json labels = json::object();
    labels["act"] = r.labels.act ? json(std::string(to_string(*r.labels.act))) : json(nullptr);
    labels["correctness"] =
        r.labels.correctness ? json(std::string(to_string(*r.labels.correctness))) : json(nullptr);
    labels["same_error"] = r.labels.same_error ? json(*r.labels.same_error) : json(nullptr);
    labels["mean_quantile"] = r.labels.mean_quantile ? json(*r.labels.mean_quantile) : json(nullptr);
    return json{{"dialogue_id", r.dialogue_id},
                {"turn_index", r.turn_index},
                {"pair_index", r.pair_index},
                {"student_ordinal", r.student_ordinal},
                {"method", std::string(to_string(r.method))},
                {"system", r.group_key()},
                {"sample_id", r.sample_id},
                {"metrics", std::move(m)},
                {"labels", std::move(labels)},
                {"raw_cosine", r.labels.raw_cosine ? json(*r.labels.raw_cosine) : json(nullptr)},
                {"failures", r.failures}};
}

MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport r;
    try {
        r.dialogue_id = require_string(j, "dialogue_id");
        r.turn_index = require_int(j, "turn_index");
        r.pair_index = j.value("pair_index", 0);
        r.student_ordinal = j.value("student_ordinal", 0);
        r.method = method_from_string(require_string(j, "method"));
        r.system = j.value("system", std::string(to_string(r.method)));
        r.sample_id = j.value("sample_id", 0);
        const auto& m = require_field(j, "metrics");
        for (auto k : kAllMetrics) {
            auto it = m.find(std::string(to_string(k)));
            if (it == m.end()) continue;
            if (it->value("applicable", false) && it->contains("value") && (*it)["value"].is_number())
                r.at(k).value = (*it)["value"].get<double>();
            else
                r.at(k).reason = it->value("reason", std::string());
        }
        if (auto it = j.find("labels"); it != j.end() && it->is_object()) {
            const auto& l = *it;
            if (l.contains("act") && l["act"].is_string()) r.labels.act = act_from_string(l["act"].get<std::string>());
            if (l.contains("correctness") && l["correctness"].is_string())
                r.labels.correctness = correctness_from_string(l["correctness"].get<std::string>());
            if (l.contains("same_error") && l["same_error"].is_boolean()) r.labels.same_error = l["same_error"].get<bool>();
            if (l.contains("mean_quantile") && l["mean_quantile"].is_number())
                r.labels.mean_quantile = l["mean_quantile"].get<double>();
        }
        if (j.contains("raw_cosine") && j["raw_cosine"].is_number()) r.labels.raw_cosine = j["raw_cosine"].get<double>();
        if (j.contains("failures")) r.failures = j["failures"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed report: ") + e.what());
    }
    return r;
}

void write_reports(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
    std::vector<json> recs;
    recs.reserve(reports.size());
    for (const auto& r : reports) recs.push_back(to_json(r));
    write_jsonl(path, recs);
}

std::vector<MetricReport> read_reports(const std::filesystem::path& path) {
    std::vector<MetricReport> out;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        try {
            out.push_back(report_from_json(j));
        } catch (const Error& e) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Acts

int act_similarity(ActLabel gt, ActLabel cand) { return gt == cand ? 1 : 0; }

Dialogue splice_candidate(const Dialogue& d, const StudentSlot& slot, const std::string& candidate_text) {
    Dialogue s = d;
    s.turns = with_student(slot.prefix, slot.turn_index, candidate_text);
    return s;
}

ActLabel classify_candidate_act(const Dialogue& d, const StudentSlot& slot, const std::string& candidate_text,
                                ChatClient& chat) {
    Dialogue spliced = splice_candidate(d, slot, candidate_text);
    auto req = annotation_request(AnnotationKind::acts, spliced, AnnotationSet{});
    return parse_act_for_turn(OutputCleaner{}(chat.chat_complete(std::move(req)).text), slot.turn_index);
}

// ---------------------------------------------------------------------------
// Correctness and errors

ChatRequest judge_request(const Dialogue& d, const StudentSlot& slot, const std::string& gt_text,
                          CorrectnessLabel gt_label, const std::string& candidate_text,
                          std::optional<int> correct_option) {
    ChatRequest r;
    r.system_prompt = std::string(prompts::kJudge);
    std::string user = prompts::render_question(d.question, correct_option);
    user += "\nDialogue context:\n" + prompts::render_plain_turns(slot.prefix);
    user += "\nGround-truth turn: " + gt_text;
    user += "\nGround-truth correctness: " + std::string(to_string(gt_label));
    user += "\nCandidate turn: " + candidate_text;
    r.messages.push_back({"user", std::move(user)});
    r.decoding.greedy = true;
    r.decoding.max_tokens = 4000;
    r.decoding.reasoning_effort = "low";
    return r;
}

JudgeVerdict parse_judge_verdict(std::string_view raw, CorrectnessLabel gt_label) {
    std::string text = OutputCleaner{}(raw);
    std::string last;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        if (!trim(line).empty()) last = trim(line);
    std::string v;
    for (char c : last) v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    while (!v.empty() && (v.back() == '.' || v.back() == '"' || v.back() == '\'')) v.pop_back();
    while (!v.empty() && (v.front() == '"' || v.front() == '\'')) v.erase(v.begin());
    if (v.empty()) throw ParseError("empty judge verdict");

    JudgeVerdict out;
    std::string head = v, clause;
    if (auto comma = v.find(','); comma != std::string::npos) {
        head = trim(v.substr(0, comma));
        clause = trim(v.substr(comma + 1));
    }
    if (head == "correct") out.correctness = CorrectnessLabel::correct;
    else if (head == "incorrect") out.correctness = CorrectnessLabel::incorrect;
    else if (head == "na" || head == "n/a") out.correctness = CorrectnessLabel::na;
    else throw ParseError("unrecognized judge verdict \"" + last + "\"");

    bool both_incorrect = gt_label == CorrectnessLabel::incorrect && out.correctness == CorrectnessLabel::incorrect;
    if (both_incorrect) {
        if (clause == "same error") out.same_error = true;
        else if (clause == "different error") out.same_error = false;
        else throw ParseError("verdict \"" + last + "\" lacks the same/different error clause");
    } else if (!clause.empty()) {
        throw ParseError("verdict \"" + last + "\" has an error clause although both turns are not incorrect");
    }
    return out;
}

JudgeVerdict judge_correctness_and_error(const Dialogue& d, const StudentSlot& slot, const std::string& gt_text,
                                         CorrectnessLabel gt_label, const std::string& candidate_text,
                                         std::optional<int> correct_option, ChatClient& judge) {
    auto req = judge_request(d, slot, gt_text, gt_label, candidate_text, correct_option);
    return parse_judge_verdict(judge.chat_complete(std::move(req)).text, gt_label);
}

std::optional<double> correctness_similarity(CorrectnessLabel gt, CorrectnessLabel cand) {
    if (gt == CorrectnessLabel::na) return std::nullopt;
    return gt == cand ? 1.0 : 0.0;
}

std::optional<double> error_similarity(CorrectnessLabel gt, CorrectnessLabel cand, std::optional<bool> same_error) {
    if (gt != CorrectnessLabel::incorrect) return std::nullopt;
    if (cand != CorrectnessLabel::incorrect) return 0.0;
    return same_error.value_or(false) ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Knowledge

ChatRequest kt_request(const Question& q, std::span<const Turn> prefix, const std::string& kc,
                       const OceanPersona* persona) {
    ChatRequest r;
    r.system_prompt = std::string(prompts::kKnowledgeTracing);
    std::string user = prompts::render_question(q, q.correct_option);
    user += "\nDialogue:\n" + prompts::render_plain_turns(prefix);
    user += "\nKnowledge component: " + kc;
    if (persona) user += "\n\nStudent persona:\n" + prompts::render_persona(*persona);
    r.messages.push_back({"user", std::move(user)});
    r.decoding.greedy = true;
    r.decoding.max_tokens = 1;
    return r;
}

KnowledgeState estimate_knowledge_state(const Question& q, std::span<const Turn> prefix,
                                        const std::vector<std::string>& kcs, Scorer& kt,
                                        const OceanPersona* persona) {
    if (kcs.empty()) throw PreconditionError("knowledge state needs at least one KC");
    KnowledgeState s;
    s.turn_index = -1;
    for (auto it = prefix.rbegin(); it != prefix.rend(); ++it)
        if (it->speaker == Speaker::student) {
            s.turn_index = it->index;
            break;
        }
    for (const auto& kc : kcs) s.z[kc] = kt.binary_token_probability(kt_request(q, prefix, kc, persona), "True", "False");
    return s;
}

double correct_answer_probability(const KnowledgeState& s, const std::vector<std::string>& kcs) {
    if (kcs.empty()) throw PreconditionError("no KCs");
    double sum = 0.0;
    for (const auto& k : kcs) {
        auto it = s.z.find(k);
        if (it == s.z.end()) throw PreconditionError("knowledge state lacks KC " + k);
        sum += it->second;
    }
    return sum / static_cast<double>(kcs.size());
}

std::map<std::string, double> knowledge_delta(const KnowledgeState& prev, const KnowledgeState& cur) {
    if (prev.z.size() != cur.z.size()) throw PreconditionError("knowledge states cover different KCs");
    std::map<std::string, double> out;
    for (const auto& [k, v] : cur.z) {
        auto it = prev.z.find(k);
        if (it == prev.z.end()) throw PreconditionError("knowledge states cover different KCs: " + k);
        out[k] = v - it->second;
    }
    return out;
}

QuantileBoundaries fit_quantile_boundaries(std::vector<double> values, std::string population) {
    if (values.size() < 5)
        throw PreconditionError("quantile fitting needs at least 5 values, got " + std::to_string(values.size()));
    for (double v : values)
        if (!std::isfinite(v)) throw PreconditionError("non-finite delta in quantile fit");
    std::sort(values.begin(), values.end());
    QuantileBoundaries b;
    const double n1 = static_cast<double>(values.size() - 1);
    for (int k = 0; k < 4; ++k) {
        double h = n1 * (k + 1) / 5.0;
        auto lo = static_cast<std::size_t>(std::floor(h));
        double frac = h - static_cast<double>(lo);
        double v = values[lo];
        if (frac > 0 && lo + 1 < values.size()) v += frac * (values[lo + 1] - values[lo]);
        b.upper[k] = v;
    }
    b.fit_count = values.size();
    b.population = std::move(population);
    return b;
}

int quantize(double delta, const QuantileBoundaries& b) {
    if (std::isnan(delta)) throw PreconditionError("cannot quantize NaN");
    for (int k = 0; k < 4; ++k)
        if (delta <= b.upper[k]) return k;
    return 4;
}

KnowledgeDistance knowledge_distance(const std::map<std::string, int>& gt, const std::map<std::string, int>& cand) {
    if (gt.empty()) throw PreconditionError("empty quantile vectors");
    if (gt.size() != cand.size()) throw PreconditionError("quantile vectors cover different KCs");
    KnowledgeDistance d;
    for (const auto& [k, q] : gt) {
        auto it = cand.find(k);
        if (it == cand.end()) throw PreconditionError("quantile vectors cover different KCs: " + k);
        if (q < 0 || q > 4 || it->second < 0 || it->second > 4) throw PreconditionError("quantile outside 0..4");
        d.numerator += std::abs(q - it->second);
    }
    d.denominator = 4L * static_cast<long>(gt.size());
    return d;
}

double knowledge_similarity(const std::map<std::string, int>& gt, const std::map<std::string, int>& cand) {
    return knowledge_distance(gt, cand).similarity();
}

// ---------------------------------------------------------------------------
// Linguistic

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw PreconditionError("vector dimensions differ");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) throw PreconditionError("zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

CosineResult embedding_cosine(const std::string& gt_text, const std::string& cand_text, Embedder& embedder) {
    auto v = embedder.embed({gt_text, cand_text});
    CosineResult r;
    r.raw = cosine_similarity(v[0].values, v[1].values);
    r.value = std::clamp(r.raw, 0.0, 1.0);
    return r;
}

std::vector<std::string> rouge_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        if (alnum) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> row(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = 0;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t up = row[j];
            row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
            diag = up;
        }
    }
    return row[b.size()];
}

RougeScore rouge_l_score(std::string_view candidate, std::string_view reference) {
    auto c = rouge_tokenize(candidate);
    auto r = rouge_tokenize(reference);
    RougeScore s;
    if (c.empty() && r.empty()) {
        s.precision = s.recall = s.f = 1.0;
        return s;
    }
    if (c.empty() || r.empty()) return s;
    s.lcs = lcs_length(c, r);
    if (s.lcs == 0) return s;
    s.precision = static_cast<double>(s.lcs) / static_cast<double>(c.size());
    s.recall = static_cast<double>(s.lcs) / static_cast<double>(r.size());
    s.f = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

double rouge_l(std::string_view candidate, std::string_view reference) {
    return rouge_l_score(candidate, reference).f;
}

// ---------------------------------------------------------------------------
// Tutor responses

double tutor_response_likelihood(std::span<const double> logprobs) {
    if (logprobs.empty()) throw PreconditionError("empty continuation");
    double sum = 0.0;
    for (double lp : logprobs) {
        if (!std::isfinite(lp) || lp > 0.0) throw PreconditionError("invalid token logprob");
        sum += lp;
    }
    return std::min(1.0, std::exp(sum / static_cast<double>(logprobs.size())));
}

std::string tutor_context(const Dialogue& d, const StudentSlot& slot, const std::string& student_text,
                          std::optional<int> correct_option) {
    std::string ctx(prompts::kTutor);
    ctx += "\n\n" + prompts::render_question(d.question, correct_option) + "\n";
    ctx += prompts::render_plain_turns(with_student(slot.prefix, slot.turn_index, student_text));
    ctx += "Tutor: ";
    return ctx;
}

double score_tutor_response(const Dialogue& d, const StudentSlot& slot, const std::string& student_text,
                            const Turn& next_tutor, std::optional<int> correct_option, Scorer& tutor) {
    auto score = tutor.score_continuation(tutor_context(d, slot, student_text, correct_option), next_tutor.text);
    return tutor_response_likelihood(score.token_logprobs);
}

// ---------------------------------------------------------------------------
// Orchestration

KnowledgeBaseline knowledge_baseline(const Dialogue& d, const StudentSlot& slot, const AnnotationSet* a,
                                     const MetricEligibility& elig, Scorer& kt, bool use_persona) {
    KnowledgeBaseline b;
    const Turn* next = next_tutor_turn(d, slot.turn_index);
    if (!elig.knowledge || !a) {
        b.reason = "KC annotations unavailable";
        return b;
    }
    if (!next) {
        b.reason = "no next tutor turn";
        return b;
    }
    auto it = a->kcs.find(next->index);
    if (it == a->kcs.end() || it->second.empty()) {
        b.reason = "next tutor turn has no KCs";
        return b;
    }
    b.kcs = d.subjects;
    const OceanPersona* persona = use_persona && a->persona ? &*a->persona : nullptr;
    std::size_t prev_end = 0;
    for (std::size_t i = slot.prefix.size(); i > 0; --i)
        if (slot.prefix[i - 1].speaker == Speaker::student) {
            prev_end = i;
            break;
        }
    b.prev = estimate_knowledge_state(d.question, slot.prefix.subspan(0, prev_end), b.kcs, kt, persona);
    const Turn& gt = turn_at(d, slot.turn_index);
    auto cur_turns = with_student(slot.prefix, slot.turn_index, gt.text);
    auto cur = estimate_knowledge_state(d.question, cur_turns, b.kcs, kt, persona);
    b.gt_delta = knowledge_delta(b.prev, cur);
    b.applicable = true;
    return b;
}

std::map<std::string, double> candidate_knowledge_delta(const Dialogue& d, const StudentSlot& slot,
                                                        const std::string& candidate_text,
                                                        const KnowledgeBaseline& base, const AnnotationSet* a,
                                                        Scorer& kt, bool use_persona) {
    const OceanPersona* persona = use_persona && a && a->persona ? &*a->persona : nullptr;
    auto turns = with_student(slot.prefix, slot.turn_index, candidate_text);
    auto cur = estimate_knowledge_state(d.question, turns, base.kcs, kt, persona);
    return knowledge_delta(base.prev, cur);
}

MetricReport evaluate_turn(const Dialogue& d, const StudentSlot& slot, const CandidateTurn& cand,
                           const AnnotationSet* a, const MetricEligibility& elig, const EvalBackends& be,
                           const QuantileBoundaries* boundaries, const KnowledgeBaseline* baseline,
                           const EvalOptions& opts) {
    if (cand.dialogue_id != d.id || cand.turn_index != slot.turn_index)
        throw PreconditionError("candidate does not belong to slot " + d.id + ":" + std::to_string(slot.turn_index));
    const Turn& gt = turn_at(d, slot.turn_index);
    const auto answer = answer_of(d, a);

    MetricReport r;
    r.dialogue_id = d.id;
    r.turn_index = slot.turn_index;
    r.pair_index = slot.pair_index;
    r.student_ordinal = slot.student_ordinal;
    r.method = cand.method;
    r.system = cand.group_key();
    r.sample_id = cand.sample_id;

    auto guarded = [&](Metric m, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            r.at(m).value.reset();
            r.at(m).reason = "error";
            r.failures.push_back(std::string(to_string(m)) + ": " + e.what());
        }
    };
    auto skip = [&](Metric m, std::string why) { r.at(m).reason = std::move(why); };

    // Acts
    if (!elig.acts || !a || !a->acts.contains(slot.turn_index)) {
        skip(Metric::acts, "no ground-truth act");
    } else if (!be.acts) {
        skip(Metric::acts, "no act backend");
    } else {
        guarded(Metric::acts, [&] {
            auto act = classify_candidate_act(d, slot, cand.text, *be.acts);
            r.labels.act = act;
            r.at(Metric::acts).value = act_similarity(a->acts.at(slot.turn_index), act);
        });
    }

    // Correctness and errors
    std::optional<CorrectnessLabel> gt_corr;
    if (elig.correctness && a && a->correctness.contains(slot.turn_index)) gt_corr = a->correctness.at(slot.turn_index);
    if (!gt_corr) {
        skip(Metric::correctness, "no ground-truth correctness");
        skip(Metric::errors, "no ground-truth correctness");
    } else if (*gt_corr == CorrectnessLabel::na) {
        skip(Metric::correctness, "ground truth is na");
        skip(Metric::errors, "ground truth is not incorrect");
    } else if (!be.judge) {
        skip(Metric::correctness, "no judge backend");
        skip(Metric::errors, "no judge backend");
    } else {
        try {
            auto v = judge_correctness_and_error(d, slot, gt.text, *gt_corr, cand.text, answer, *be.judge);
            r.labels.correctness = v.correctness;
            r.labels.same_error = v.same_error;
            r.at(Metric::correctness).value = correctness_similarity(*gt_corr, v.correctness);
            if (!elig.errors) skip(Metric::errors, "errors disabled for this dialogue");
            else if (auto e = error_similarity(*gt_corr, v.correctness, v.same_error)) r.at(Metric::errors).value = e;
            else skip(Metric::errors, "ground truth is not incorrect");
        } catch (const std::exception& e) {
            r.at(Metric::correctness).reason = r.at(Metric::errors).reason = "error";
            r.failures.push_back(std::string("correctness: ") + e.what());
        }
    }

    // Knowledge
    if (!be.kt) {
        skip(Metric::knowledge, "no KT backend");
    } else {
        guarded(Metric::knowledge, [&] {
            KnowledgeBaseline local;
            if (!baseline) {
                local = knowledge_baseline(d, slot, a, elig, *be.kt, opts.kt_uses_persona);
                baseline = &local;
            }
            if (!baseline->applicable) {
                skip(Metric::knowledge, baseline->reason);
                return;
            }
            if (!boundaries) {
                skip(Metric::knowledge, "no quantile boundaries");
                return;
            }
            auto cd = candidate_knowledge_delta(d, slot, cand.text, *baseline, a, *be.kt, opts.kt_uses_persona);
            std::map<std::string, int> qg, qc;
            double qsum = 0.0;
            for (const auto& [k, v] : baseline->gt_delta) qg[k] = quantize(v, *boundaries);
            for (const auto& [k, v] : cd) {
                qc[k] = quantize(v, *boundaries);
                qsum += qc[k];
            }
            r.labels.mean_quantile = qsum / static_cast<double>(qc.size());
            r.at(Metric::knowledge).value = knowledge_similarity(qg, qc);
        });
    }

    // Cosine similarity
    if (!be.embedder) {
        skip(Metric::cos_sim, "no embedding backend");
    } else {
        guarded(Metric::cos_sim, [&] {
            auto c = embedding_cosine(gt.text, cand.text, *be.embedder);
            r.labels.raw_cosine = c.raw;
            r.at(Metric::cos_sim).value = c.value;
        });
    }

    r.at(Metric::rouge_l).value = rouge_l(cand.text, gt.text);

    // Tutor responses
    const Turn* next = next_tutor_turn(d, slot.turn_index);
    if (!next) {
        skip(Metric::tutor_resp, "no next tutor turn");
    } else if (!be.tutor) {
        skip(Metric::tutor_resp, "no tutor backend");
    } else {
        guarded(Metric::tutor_resp, [&] {
            r.at(Metric::tutor_resp).value = score_tutor_response(d, slot, cand.text, *next, answer, *be.tutor);
        });
    }
    return r;
}

namespace {

template <class F>
void parallel_for(std::size_t n, int workers, F&& fn) {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < std::max(1, workers); ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

BatchResult evaluate_batch(const Corpus& c, const std::vector<CandidateTurn>& candidates, const EvalBackends& be,
                           const EvalOptions& opts, const std::optional<QuantileBoundaries>& preset) {
    auto elig = drop_failed_annotations(c);

    // Resolve every candidate's slot up front so bad input fails before any backend call.
    std::vector<std::pair<const Dialogue*, StudentSlot>> slots;
    slots.reserve(candidates.size());
    std::vector<std::string> dialogue_order;
    std::set<std::string> seen;
    for (const auto& cand : candidates) {
        const Dialogue* d = c.find(cand.dialogue_id);
        if (!d) throw PreconditionError("candidate references unknown dialogue " + cand.dialogue_id);
        slots.emplace_back(d, slot_at(*d, cand.turn_index));
        if (seen.insert(d->id).second) dialogue_order.push_back(d->id);
    }

    // Phase 1: ground-truth knowledge baselines for every slot of the evaluated dialogues.
    std::map<std::pair<std::string, int>, KnowledgeBaseline> baselines;
    if (be.kt) {
        std::vector<std::pair<const Dialogue*, StudentSlot>> all;
        for (const auto& id : dialogue_order) {
            const Dialogue* d = c.find(id);
            for (const auto& s : student_turn_slots(*d)) all.emplace_back(d, s);
        }
        std::vector<KnowledgeBaseline> computed(all.size());
        parallel_for(all.size(), opts.workers, [&](std::size_t i) {
            const auto* d = all[i].first;
            computed[i] = knowledge_baseline(*d, all[i].second, c.annotations_for(d->id), elig(d->id), *be.kt,
                                             opts.kt_uses_persona);
        });
        for (std::size_t i = 0; i < all.size(); ++i)
            baselines[{all[i].first->id, all[i].second.turn_index}] = std::move(computed[i]);
    }

    BatchResult out;
    if (preset) {
        out.boundaries = preset;
    } else if (be.kt) {
        std::vector<double> deltas;
        for (const auto& [key, b] : baselines)
            if (b.applicable)
                for (const auto& [k, v] : b.gt_delta) deltas.push_back(v);
        if (deltas.size() >= 5)
            out.boundaries = fit_quantile_boundaries(
                std::move(deltas), "ground-truth deltas of " + std::to_string(dialogue_order.size()) + " dialogues");
    }

    // Phase 2: candidates.
    out.reports.resize(candidates.size());
    const QuantileBoundaries* bounds = out.boundaries ? &*out.boundaries : nullptr;
    parallel_for(candidates.size(), opts.workers, [&](std::size_t i) {
        const auto& [d, slot] = slots[i];
        const KnowledgeBaseline* base = nullptr;
        if (auto it = baselines.find({d->id, slot.turn_index}); it != baselines.end()) base = &it->second;
        out.reports[i] = evaluate_turn(*d, slot, candidates[i], c.annotations_for(d->id), elig(d->id), be, bounds,
                                       base, opts);
        if (be.kt && base && base->applicable && !bounds)
            out.reports[i].at(Metric::knowledge).reason = "too few ground-truth deltas to fit quantiles";
    });
    return out;
}

nlohmann::json to_json(const QuantileBoundaries& b) {
    return json{{"upper", std::vector<double>(b.upper.begin(), b.upper.end())},
                {"fit_count", b.fit_count},
                {"population", b.population}};
}

QuantileBoundaries boundaries_from_json(const nlohmann::json& j) {
    QuantileBoundaries b;
    try {
        auto u = j.at("upper").get<std::vector<double>>();
        if (u.size() != 4) throw ParseError("quantile boundaries need 4 upper bounds");
        std::copy(u.begin(), u.end(), b.upper.begin());
        if (!std::is_sorted(b.upper.begin(), b.upper.end())) throw ParseError("quantile boundaries must ascend");
        b.fit_count = j.value("fit_count", std::size_t{0});
        b.population = j.value("population", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed quantile boundaries: ") + e.what());
    }
    return b;
}

}  // namespace simeval
