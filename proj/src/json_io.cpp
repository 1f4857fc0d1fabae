#include "simeval/json_io.hpp"

#include <fstream>
#include <sstream>

#include "simeval/error.hpp"

namespace simeval {

const json& require_field(const json& j, const char* key) {
    if (!j.is_object()) throw ParseError("expected a JSON object");
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(std::string("missing field \"") + key + "\"");
    return *it;
}

std::string require_string(const json& j, const char* key) {
    const json& v = require_field(j, key);
    if (!v.is_string()) throw ParseError(std::string("field \"") + key + "\" must be a string");
    return v.get<std::string>();
}

int require_int(const json& j, const char* key) {
    const json& v = require_field(j, key);
    if (!v.is_number_integer()) throw ParseError(std::string("field \"") + key + "\" must be an integer");
    return v.get<int>();
}

json to_json(const Question& q) {
    json j{{"stem", q.stem}, {"options", q.options}};
    if (q.correct_option) j["correct_option"] = *q.correct_option;
    if (q.solvable) j["solvable"] = *q.solvable;
    return j;
}

Question question_from_json(const json& j) {
    Question q;
    q.stem = require_string(j, "stem");
    const json& opts = require_field(j, "options");
    if (!opts.is_array() || opts.size() != 4)
        throw ParseError("question must have exactly 4 options");
    for (std::size_t i = 0; i < 4; ++i) {
        if (!opts[i].is_string()) throw ParseError("question options must be strings");
        q.options[i] = opts[i].get<std::string>();
    }
    if (auto it = j.find("correct_option"); it != j.end() && !it->is_null()) {
        int v = it->get<int>();
        if (v < 1 || v > 4) throw ParseError("correct_option must be in 1..4");
        q.correct_option = v;
    }
    if (auto it = j.find("solvable"); it != j.end() && !it->is_null()) q.solvable = it->get<bool>();
    return q;
}

json to_json(const Dialogue& d) {
    json turns = json::array();
    for (const auto& t : d.turns)
        turns.push_back({{"index", t.index}, {"speaker", to_string(t.speaker)}, {"text", t.text}});
    return {{"id", d.id},
            {"split", to_string(d.split)},
            {"subjects", d.subjects},
            {"question", to_json(d.question)},
            {"turns", std::move(turns)}};
}

Dialogue dialogue_from_json(const json& j) {
    Dialogue d;
    d.id = require_string(j, "id");
    d.split = split_from_string(require_string(j, "split"));
    const json& subjects = require_field(j, "subjects");
    if (!subjects.is_array()) throw ParseError("field \"subjects\" must be an array");
    for (const auto& s : subjects) d.subjects.push_back(s.get<std::string>());
    d.question = question_from_json(require_field(j, "question"));
    const json& turns = require_field(j, "turns");
    if (!turns.is_array()) throw ParseError("field \"turns\" must be an array");
    for (const auto& t : turns) {
        Turn turn;
        turn.index = require_int(t, "index");
        turn.speaker = speaker_from_string(require_string(t, "speaker"));
        turn.text = require_string(t, "text");
        d.turns.push_back(std::move(turn));
    }
    return d;
}

json to_json(const OceanPersona& p) {
    json j{{"reasoning", p.reasoning}};
    for (auto t : kAllTraits) j[std::string(to_string(t))] = to_string(p.level(t));
    return j;
}

OceanPersona persona_from_json(const json& j) {
    OceanPersona p;
    p.reasoning = require_string(j, "reasoning");
    for (auto t : kAllTraits) {
        std::string key(to_string(t));
        p.set(t, trait_level_from_string(require_string(j, key.c_str())));
    }
    return p;
}

json to_json(const SolutionRecord& s) {
    json j{{"solution", s.solution}, {"solvable", s.solvable}, {"correct_option", s.correct_option}};
    for (int i = 0; i < 4; ++i)
        j["option_" + std::to_string(i + 1) + "_explanation"] = s.option_explanations[i];
    return j;
}

SolutionRecord solution_from_json(const json& j) {
    SolutionRecord s;
    const json& sol = require_field(j, "solution");
    s.solution = sol.is_string() ? sol.get<std::string>() : sol.dump();
    const json& solvable = require_field(j, "solvable");
    if (!solvable.is_boolean()) throw ParseError("field \"solvable\" must be a boolean");
    s.solvable = solvable.get<bool>();
    s.correct_option = require_int(j, "correct_option");
    if (s.correct_option < 1 || s.correct_option > 4)
        throw ParseError("correct_option " + std::to_string(s.correct_option) + " outside 1..4");
    for (int i = 0; i < 4; ++i) {
        std::string key = "option_" + std::to_string(i + 1) + "_explanation";
        s.option_explanations[i] = require_string(j, key.c_str());
    }
    return s;
}

json to_json(const CandidateTurn& c) {
    json j{{"dialogue_id", c.dialogue_id},
           {"turn_index", c.turn_index},
           {"method", to_string(c.method)},
           {"sample_id", c.sample_id},
           {"text", c.text}};
    if (!c.system.empty()) j["system"] = c.system;
    if (c.ended_dialogue) j["ended_dialogue"] = true;
    return j;
}

CandidateTurn candidate_from_json(const json& j) {
    CandidateTurn c;
    c.dialogue_id = require_string(j, "dialogue_id");
    c.turn_index = require_int(j, "turn_index");
    c.method = method_from_string(require_string(j, "method"));
    c.sample_id = require_int(j, "sample_id");
    if (c.sample_id < 0) throw ParseError("sample_id must be >= 0");
    c.text = require_string(j, "text");
    c.system = j.value("system", std::string());
    c.ended_dialogue = j.value("ended_dialogue", false);
    return c;
}

json annotation_payload(const AnnotationSet& a, AnnotationKind kind) {
    auto with_flag = [&](json labels, FailureFlag f) {
        json p{{"labels", std::move(labels)}};
        if (a.failed(f)) p["failed"] = true;
        return p;
    };
    switch (kind) {
        case AnnotationKind::acts: {
            if (a.acts.empty() && !a.failed(FailureFlag::acts_failed)) return nullptr;
            json labels = json::object();
            for (const auto& [turn, act] : a.acts) labels[std::to_string(turn)] = to_string(act);
            return with_flag(std::move(labels), FailureFlag::acts_failed);
        }
        case AnnotationKind::correctness: {
            if (a.correctness.empty() && !a.failed(FailureFlag::correctness_failed)) return nullptr;
            json labels = json::object();
            for (const auto& [turn, c] : a.correctness) labels[std::to_string(turn)] = to_string(c);
            return with_flag(std::move(labels), FailureFlag::correctness_failed);
        }
        case AnnotationKind::kcs: {
            if (a.kcs.empty() && !a.failed(FailureFlag::kcs_failed)) return nullptr;
            json labels = json::object();
            for (const auto& [turn, set] : a.kcs) labels[std::to_string(turn)] = set;
            return with_flag(std::move(labels), FailureFlag::kcs_failed);
        }
        case AnnotationKind::persona:
            return a.persona ? to_json(*a.persona) : json(nullptr);
        case AnnotationKind::summary:
            return a.oracle_summary ? json{{"text", *a.oracle_summary}} : json(nullptr);
        case AnnotationKind::solution:
            return a.solution ? to_json(*a.solution) : json(nullptr);
    }
    return nullptr;
}

namespace {

int turn_key(const std::string& k) {
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(k, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != k.size() || v < 0) throw ParseError("invalid turn key \"" + k + "\"");
    return v;
}

void set_flag(AnnotationSet& a, FailureFlag f, const json& p) {
    if (p.value("failed", false))
        a.failure_flags.insert(f);
    else
        a.failure_flags.erase(f);
}

}  // namespace

void apply_annotation_payload(AnnotationSet& a, AnnotationKind kind, const json& p) {
    switch (kind) {
        case AnnotationKind::acts:
            a.acts.clear();
            for (const auto& [k, v] : require_field(p, "labels").items())
                a.acts[turn_key(k)] = act_from_string(v.get<std::string>());
            set_flag(a, FailureFlag::acts_failed, p);
            break;
        case AnnotationKind::correctness:
            a.correctness.clear();
            for (const auto& [k, v] : require_field(p, "labels").items())
                a.correctness[turn_key(k)] = correctness_from_string(v.get<std::string>());
            set_flag(a, FailureFlag::correctness_failed, p);
            break;
        case AnnotationKind::kcs:
            a.kcs.clear();
            for (const auto& [k, v] : require_field(p, "labels").items())
                a.kcs[turn_key(k)] = v.get<std::set<std::string>>();
            set_flag(a, FailureFlag::kcs_failed, p);
            break;
        case AnnotationKind::persona:
            a.persona = persona_from_json(p);
            break;
        case AnnotationKind::summary:
            a.oracle_summary = require_string(p, "text");
            break;
        case AnnotationKind::solution:
            a.solution = solution_from_json(p);
            break;
    }
}

std::string dump_line(const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) out << dump_line(r) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

void write_candidates(const std::filesystem::path& path, const std::vector<CandidateTurn>& c) {
    std::vector<json> records;
    records.reserve(c.size());
    for (const auto& x : c) records.push_back(to_json(x));
    write_jsonl(path, records);
}

std::vector<CandidateTurn> read_candidates(const std::filesystem::path& path) {
    std::vector<CandidateTurn> out;
    std::size_t lineno = 0;
    for (const auto& j : read_jsonl(path)) {
        ++lineno;
        try {
            out.push_back(candidate_from_json(j));
        } catch (const Error& e) {
            throw ParseError(path.string() + ": record " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace simeval
