#include "simeval/annotate.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <regex>
#include <thread>

#include "simeval/error.hpp"
#include "simeval/prompts.hpp"

namespace simeval {

using json = nlohmann::json;

namespace {

// Removes commas that directly precede a closing bracket, outside string literals.
std::string drop_trailing_commas(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false, escaped = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            out += c;
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == ',') {
            std::size_t j = i + 1;
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;
        }
        out += c;
    }
    return out;
}

std::string strip_fences(std::string_view s) {
    auto open = s.find("```");
    if (open == std::string_view::npos) return std::string(s);
    auto body = s.find('\n', open);
    if (body == std::string_view::npos) return std::string(s);
    auto close = s.find("```", body + 1);
    return std::string(s.substr(body + 1, close == std::string_view::npos ? std::string_view::npos : close - body - 1));
}

std::string outermost_object(std::string_view s) {
    auto a = s.find('{');
    auto b = s.rfind('}');
    if (a == std::string_view::npos || b == std::string_view::npos || b < a) return std::string(s);
    return std::string(s.substr(a, b - a + 1));
}

int turn_key(const std::string& key) {
    static const std::regex re(R"(turn (\d+))");
    std::smatch m;
    if (!std::regex_match(key, m, re)) throw ParseError("unexpected key \"" + key + "\"");
    return std::stoi(m[1].str());
}

const Turn* turn_at(const Dialogue& d, int index) {
    for (const auto& t : d.turns)
        if (t.index == index) return &t;
    return nullptr;
}

const json& object_of(const json& j, const char* what) {
    if (!j.is_object()) throw ParseError(std::string(what) + " response is not a JSON object");
    return j;
}

const json& field(const json& j, const std::string& key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError("missing \"" + key + "\" in " + where);
    return *it;
}

std::string string_field(const json& j, const std::string& key, const std::string& where) {
    const auto& v = field(j, key, where);
    if (!v.is_string()) throw ParseError("\"" + key + "\" in " + where + " is not a string");
    return v.get<std::string>();
}

std::optional<int> known_answer(const Dialogue& d, const AnnotationSet& a) {
    if (a.solution) return a.solution->correct_option;
    return d.question.correct_option;
}

ChatRequest request_for(std::string_view system, std::string user, int max_tokens) {
    ChatRequest r;
    r.system_prompt = std::string(system);
    r.messages.push_back({"user", std::move(user)});
    r.decoding.greedy = true;
    r.decoding.max_tokens = max_tokens;
    return r;
}

std::string complete(ChatClient& chat, ChatRequest req, const OutputCleaner& clean) {
    return clean(chat.chat_complete(std::move(req)).text);
}

}  // namespace

std::string OutputCleaner::operator()(std::string_view raw) const {
    std::string s(raw);
    if (strip_think_blocks) {
        static const std::regex think(R"(<think>[\s\S]*?</think>)");
        s = std::regex_replace(s, think, "");
    }
    if (!strip_regex.empty()) s = std::regex_replace(s, std::regex(strip_regex), "");
    return s;
}

json parse_model_json(std::string_view raw) {
    try {
        return json::parse(raw);
    } catch (const json::parse_error&) {
    }
    std::string repaired = drop_trailing_commas(outermost_object(strip_fences(raw)));
    try {
        return json::parse(repaired);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("model output is not valid JSON: ") + e.what());
    }
}

std::map<int, ActLabel> parse_acts(const Dialogue& d, std::string_view raw) {
    const json j = parse_model_json(raw);
    object_of(j, "acts");
    std::map<int, ActLabel> out;
    for (const auto& [key, v] : j.items()) {
        int idx = turn_key(key);
        const Turn* t = turn_at(d, idx);
        if (!t || t->speaker != Speaker::student) throw ParseError(key + " is not a student turn");
        if (!v.is_object()) throw ParseError(key + " is not an object");
        out[idx] = act_from_string(string_field(v, "act", key));
    }
    for (const auto& t : d.turns)
        if (t.speaker == Speaker::student && !out.contains(t.index))
            throw ParseError("missing turn " + std::to_string(t.index));
    return out;
}

ActLabel parse_act_for_turn(std::string_view raw, int turn_index) {
    const json j = parse_model_json(raw);
    object_of(j, "acts");
    std::string key = "turn " + std::to_string(turn_index);
    const auto& v = field(j, key, "acts response");
    if (!v.is_object()) throw ParseError(key + " is not an object");
    return act_from_string(string_field(v, "act", key));
}

std::map<int, CorrectnessLabel> parse_correctness(const Dialogue& d, std::string_view raw) {
    const json j = parse_model_json(raw);
    object_of(j, "correctness");
    std::map<int, CorrectnessLabel> out;
    for (const auto& [key, v] : j.items()) {
        int idx = turn_key(key);
        const Turn* t = turn_at(d, idx);
        if (!t || t->speaker != Speaker::student) throw ParseError(key + " is not a student turn");
        if (!v.is_object()) throw ParseError(key + " is not an object");
        const auto& c = field(v, "correct", key);
        if (c.is_null()) out[idx] = CorrectnessLabel::na;
        else if (c.is_boolean()) out[idx] = c.get<bool>() ? CorrectnessLabel::correct : CorrectnessLabel::incorrect;
        else throw ParseError("\"correct\" in " + key + " must be true, false or null");
    }
    for (const auto& t : d.turns)
        if (t.speaker == Speaker::student && !out.contains(t.index))
            throw ParseError("missing turn " + std::to_string(t.index));
    return out;
}

std::map<int, std::set<std::string>> parse_kcs(const Dialogue& d, std::string_view raw) {
    const json j = parse_model_json(raw);
    object_of(j, "kcs");
    std::set<std::string> allowed(d.subjects.begin(), d.subjects.end());
    std::map<int, std::set<std::string>> out;
    for (const auto& [key, v] : j.items()) {
        int idx = turn_key(key);
        const Turn* t = turn_at(d, idx);
        if (!t || t->speaker != Speaker::tutor) throw ParseError(key + " is not a tutor turn");
        if (!v.is_object()) throw ParseError(key + " is not an object");
        const auto& list = field(v, "kcs", key);
        if (!list.is_array()) throw ParseError("\"kcs\" in " + key + " is not a list");
        std::set<std::string> kcs;
        for (const auto& k : list) {
            if (!k.is_string()) throw ParseError("non-string KC in " + key);
            auto name = k.get<std::string>();
            if (!allowed.contains(name)) throw ParseError("unknown KC \"" + name + "\" in " + key);
            kcs.insert(name);
        }
        out[idx] = std::move(kcs);
    }
    return out;
}

SolutionRecord parse_solution(std::string_view raw) {
    const json j = parse_model_json(raw);
    object_of(j, "solution");
    SolutionRecord s;
    s.solution = string_field(j, "solution", "solution");
    const auto& solvable = field(j, "solvable", "solution");
    if (!solvable.is_boolean()) throw ParseError("\"solvable\" is not a boolean");
    s.solvable = solvable.get<bool>();
    const auto& opt = field(j, "correct_option", "solution");
    if (!opt.is_number_integer()) throw ParseError("\"correct_option\" is not an integer");
    s.correct_option = opt.get<int>();
    if (s.correct_option < 1 || s.correct_option > 4)
        throw ParseError("correct_option " + std::to_string(s.correct_option) + " is outside 1..4");
    for (int i = 0; i < 4; ++i)
        s.option_explanations[i] =
            string_field(j, "option_" + std::to_string(i + 1) + "_explanation", "solution");
    return s;
}

OceanPersona parse_persona(std::string_view raw) {
    const json j = parse_model_json(raw);
    object_of(j, "persona");
    OceanPersona p;
    if (j.contains("reasoning")) p.reasoning = string_field(j, "reasoning", "persona");
    for (auto t : kAllTraits)
        p.set(t, trait_level_from_string(string_field(j, std::string(to_string(t)), "persona")));
    return p;
}

std::string parse_summary(std::string_view raw) {
    std::string s = trim(raw);
    if (s.empty()) throw ParseError("empty summary");
    return s;
}

ChatRequest annotation_request(AnnotationKind kind, const Dialogue& d, const AnnotationSet& existing) {
    constexpr int kMax = 4000;
    auto answer = known_answer(d, existing);
    switch (kind) {
        case AnnotationKind::acts:
            return request_for(prompts::kActs, prompts::annotation_user_message(d, answer), kMax);
        case AnnotationKind::correctness:
            return request_for(prompts::kCorrectness, prompts::annotation_user_message(d, answer), kMax);
        case AnnotationKind::kcs:
            return request_for(prompts::kKnowledgeComponents, prompts::kc_user_message(d, answer), kMax);
        case AnnotationKind::solution:
            return request_for(prompts::kSolution, prompts::render_question(d.question, std::nullopt), kMax);
        case AnnotationKind::persona:
            return request_for(prompts::kOcean, prompts::annotation_user_message(d, answer), kMax);
        case AnnotationKind::summary:
            return request_for(prompts::kSummary, prompts::annotation_user_message(d, answer), kMax);
    }
    throw PreconditionError("unknown annotation kind");
}

AnnotationJob annotate_one(AnnotationKind kind, const Dialogue& d, AnnotationSet& set, ChatClient& chat,
                           const AnnotateOptions& opts) {
    AnnotationJob job;
    job.kind = kind;
    job.dialogue_id = d.id;
    auto req = annotation_request(kind, d, set);
    req.decoding.max_tokens = opts.max_tokens;
    job.raw_response = chat.chat_complete(std::move(req)).text;
    std::string text = opts.cleaner(job.raw_response);
    try {
        switch (kind) {
            case AnnotationKind::acts:
                set.acts = parse_acts(d, text);
                set.failure_flags.erase(FailureFlag::acts_failed);
                break;
            case AnnotationKind::correctness:
                set.correctness = parse_correctness(d, text);
                set.failure_flags.erase(FailureFlag::correctness_failed);
                break;
            case AnnotationKind::kcs:
                set.kcs = parse_kcs(d, text);
                set.failure_flags.erase(FailureFlag::kcs_failed);
                break;
            case AnnotationKind::solution: set.solution = parse_solution(text); break;
            case AnnotationKind::persona: set.persona = parse_persona(text); break;
            case AnnotationKind::summary: set.oracle_summary = parse_summary(text); break;
        }
        job.ok = true;
    } catch (const Error& e) {
        job.error = e.what();
        switch (kind) {
            case AnnotationKind::acts:
                set.acts.clear();
                set.failure_flags.insert(FailureFlag::acts_failed);
                break;
            case AnnotationKind::correctness:
                set.correctness.clear();
                set.failure_flags.insert(FailureFlag::correctness_failed);
                break;
            case AnnotationKind::kcs:
                set.kcs.clear();
                set.failure_flags.insert(FailureFlag::kcs_failed);
                break;
            default: break;
        }
    }
    return job;
}

std::map<int, ActLabel> annotate_acts(const Dialogue& d, ChatClient& chat) {
    return parse_acts(d, complete(chat, annotation_request(AnnotationKind::acts, d, {}), {}));
}

std::map<int, CorrectnessLabel> annotate_correctness(const Dialogue& d, ChatClient& chat) {
    return parse_correctness(d, complete(chat, annotation_request(AnnotationKind::correctness, d, {}), {}));
}

std::map<int, std::set<std::string>> annotate_kcs(const Dialogue& d, ChatClient& chat) {
    return parse_kcs(d, complete(chat, annotation_request(AnnotationKind::kcs, d, {}), {}));
}

SolutionRecord annotate_solution(const Question& q, ChatClient& chat) {
    Dialogue d;
    d.question = q;
    return parse_solution(complete(chat, annotation_request(AnnotationKind::solution, d, {}), {}));
}

OceanPersona annotate_persona(const Dialogue& d, ChatClient& chat) {
    return parse_persona(complete(chat, annotation_request(AnnotationKind::persona, d, {}), {}));
}

std::string annotate_summary(const Dialogue& d, ChatClient& chat) {
    return parse_summary(complete(chat, annotation_request(AnnotationKind::summary, d, {}), {}));
}

std::vector<AnnotationJob> annotate_corpus(Corpus& c, const std::vector<AnnotationKind>& kinds, ChatClient& chat,
                                           int workers, const AnnotateOptions& opts) {
    // The solution runs first so the other prompts can show the annotated answer.
    std::vector<AnnotationKind> order = kinds;
    std::stable_partition(order.begin(), order.end(), [](AnnotationKind k) { return k == AnnotationKind::solution; });

    const std::size_t n = c.dialogues.size();
    std::vector<AnnotationSet> sets(n);
    for (std::size_t i = 0; i < n; ++i)
        if (const auto* a = c.annotations_for(c.dialogues[i].id)) sets[i] = *a;
    std::vector<std::vector<AnnotationJob>> jobs(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                for (auto k : order) jobs[i].push_back(annotate_one(k, c.dialogues[i], sets[i], chat, opts));
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

    std::vector<AnnotationJob> out;
    for (std::size_t i = 0; i < n; ++i) {
        c.annotations_mut(c.dialogues[i].id) = std::move(sets[i]);
        for (auto& j : jobs[i]) out.push_back(std::move(j));
    }
    return out;
}

}  // namespace simeval
