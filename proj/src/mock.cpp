#include "simeval/mock.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "simeval/core.hpp"
#include "simeval/error.hpp"
#include "simeval/prompts.hpp"

namespace simeval {

using json = nlohmann::json;

std::uint64_t stable_hash(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

double unit_from_hash(std::uint64_t h) { return static_cast<double>(h >> 11) / 9007199254740992.0; }

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool has_digit(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool contains(std::string_view hay, std::string_view needle) { return hay.find(needle) != std::string_view::npos; }

std::string param(std::string_view url, std::string_view key, std::string fallback) {
    auto q = url.find('?');
    if (q == std::string_view::npos) return fallback;
    std::string rest(url.substr(q + 1));
    std::size_t pos = 0;
    while (pos <= rest.size()) {
        auto amp = rest.find('&', pos);
        if (amp == std::string::npos) amp = rest.size();
        const std::string part = rest.substr(pos, amp - pos);
        const auto eq = part.find('=');
        if (eq != std::string::npos && part.compare(0, eq, key) == 0 && eq == key.size()) return part.substr(eq + 1);
        pos = amp + 1;
    }
    return fallback;
}

std::string_view kind_of(std::string_view url) {
    if (url.rfind("mock:", 0) != 0) throw ParseError("not a mock url: " + std::string(url));
    auto k = url.substr(5);
    return k.substr(0, k.find('?'));
}

// ---------------------------------------------------------------------------
// Parsing the rendered user messages back into parts.

struct ParsedTurn {
    int index = -1;
    bool tutor = false;
    std::string text;
};

struct ParsedPrompt {
    std::string stem;
    std::array<std::string, 4> options;
    int correct = 0;  // 1..4, 0 unknown
    std::vector<std::string> kcs;
    std::vector<ParsedTurn> turns;
};

ParsedPrompt parse_prompt(const std::string& msg) {
    ParsedPrompt p;
    std::istringstream in(msg);
    std::string line;
    enum { none, kcs, dialogue } section = none;
    while (std::getline(in, line)) {
        if (line.rfind("Question: ", 0) == 0) {
            p.stem = line.substr(10);
        } else if (line.size() > 3 && line[1] == ':' && line[2] == ' ' && line[0] >= 'A' && line[0] <= 'D' &&
                   section == none) {
            p.options[line[0] - 'A'] = line.substr(3);
        } else if (line.rfind("Correct Answer: ", 0) == 0 && line.size() > 16) {
            p.correct = line[16] - 'A' + 1;
        } else if (line == "Knowledge components:") {
            section = kcs;
        } else if (line == "Dialogue:") {
            section = dialogue;
        } else if (section == kcs && line.rfind("- ", 0) == 0) {
            p.kcs.push_back(line.substr(2));
        } else if (section == dialogue) {
            int idx = -1;
            char who[16] = {0};
            if (line.rfind("turn ", 0) == 0 && std::sscanf(line.c_str(), "turn %d - %15[A-Za-z]:", &idx, who) == 2) {
                ParsedTurn t;
                t.index = idx;
                t.tutor = std::string_view(who) == "Tutor";
                auto colon = line.find(": ");
                t.text = colon == std::string::npos ? std::string() : line.substr(colon + 2);
                p.turns.push_back(std::move(t));
            } else if (!p.turns.empty()) {
                p.turns.back().text += "\n" + line;
            }
        }
    }
    return p;
}

std::vector<std::string> answer_tokens(const ParsedPrompt& p) {
    std::vector<std::string> out;
    if (p.correct < 1 || p.correct > 4) return out;
    out.push_back(std::string(1, static_cast<char>('a' + p.correct - 1)));
    auto w = words(p.options[p.correct - 1]);
    if (!w.empty()) out.push_back(lower(p.options[p.correct - 1]));
    return out;
}

// ---------------------------------------------------------------------------
// Heuristic labelers shared by the annotation and judge responses.

ActLabel heuristic_act(std::string_view text) {
    std::string t = lower(trim(text));
    auto w = words(t);
    static const char* kNotUnderstanding[] = {"don't know", "dont know", "idk", "not sure", "don't get",
                                              "dont get", "confused", "don't understand", "dont understand",
                                              "no idea"};
    for (auto* s : kNotUnderstanding)
        if (contains(t, s)) return ActLabel::NotUnderstanding;
    static const char* kSeek[] = {"would i", "do i", "should i", "what do you mean", "how do", "is that right",
                                  "can you", "what is", "why"};
    bool question = !t.empty() && t.back() == '?';
    bool leading_digit = !t.empty() && std::isdigit(static_cast<unsigned char>(t.front()));
    if (question && !leading_digit)
        for (auto* s : kSeek)
            if (contains(t, s)) return ActLabel::SeekInformation;
    if (has_digit(t)) return ActLabel::MathAnswer;
    if (w.size() == 1 && w[0].size() == 1 && w[0][0] >= 'a' && w[0][0] <= 'd') return ActLabel::MathAnswer;
    static const char* kSocial[] = {"hello", "hi", "hiya", "bye", "thanks", "thank", "goodbye", "lol", "hey"};
    for (const auto& x : w)
        for (auto* s : kSocial)
            if (x == s) return ActLabel::OffTopic;
    static const char* kAck[] = {"ok", "okay", "yes", "yeah", "sure", "right", "oh", "ah", "cool", "alright",
                                 "yep", "yh", "k", "ohh", "fine", "got", "it", "i", "see"};
    bool all_ack = !w.empty();
    for (const auto& x : w)
        all_ack = all_ack && std::any_of(std::begin(kAck), std::end(kAck), [&](const char* s) { return x == s; });
    if (all_ack) return ActLabel::Acknowledge;
    if (question) return ActLabel::SeekInformation;
    if (w.empty()) return ActLabel::Acknowledge;
    return w.size() <= 3 ? ActLabel::Acknowledge : ActLabel::MathAnswer;
}

std::optional<bool> heuristic_correct(std::string_view student, std::string_view prev_tutor,
                                      const std::vector<std::string>& answers) {
    ActLabel act = heuristic_act(student);
    bool asked = contains(prev_tutor, "?");
    if (act == ActLabel::NotUnderstanding && asked) return false;
    if (act != ActLabel::MathAnswer || !asked) return std::nullopt;
    std::string t = lower(student);
    auto w = words(t);
    for (const auto& a : answers) {
        if (a.size() == 1) {
            if (std::find(w.begin(), w.end(), a) != w.end()) return true;
        } else if (contains(t, a)) {
            return true;
        }
    }
    return false;
}

std::string fenced(const json& j) { return "```json\n" + j.dump(2) + "\n```"; }

std::string respond_acts(const ParsedPrompt& p) {
    json out = json::object();
    for (const auto& t : p.turns) {
        if (t.tutor) continue;
        auto act = heuristic_act(t.text);
        out["turn " + std::to_string(t.index)] = {{"reasoning", "Heuristic reading of the student turn."},
                                                   {"act", std::string(to_string(act))}};
    }
    return fenced(out);
}

std::string respond_correctness(const ParsedPrompt& p) {
    json out = json::object();
    auto answers = answer_tokens(p);
    std::string prev;
    for (const auto& t : p.turns) {
        if (t.tutor) {
            prev = t.text;
            continue;
        }
        auto c = heuristic_correct(t.text, prev, answers);
        json v = c ? json(*c) : json(nullptr);
        out["turn " + std::to_string(t.index)] = {{"summary", "Heuristic check against the tutor's task."},
                                                   {"correct", v}};
    }
    return fenced(out);
}

std::string respond_kcs(const ParsedPrompt& p) {
    json out = json::object();
    std::vector<std::string> named;
    for (const auto& k : p.kcs)
        if (k != kDefaultKc) named.push_back(k);
    for (const auto& t : p.turns) {
        if (!t.tutor || !contains(t.text, "?")) continue;
        json kcs = json::array();
        if (named.empty() || !has_digit(t.text)) {
            kcs.push_back(std::string(kDefaultKc));
        } else {
            auto h = stable_hash(t.text);
            kcs.push_back(named[h % named.size()]);
            if (named.size() > 1 && (h >> 8) % 2 == 0) {
                auto second = named[(h / named.size() + 1) % named.size()];
                if (second != kcs[0]) kcs.push_back(second);
            }
        }
        out["turn " + std::to_string(t.index)] = {{"summary", "Tutor poses a task."}, {"kcs", kcs}};
    }
    return fenced(out);
}

std::string respond_solution(const ParsedPrompt& p) {
    int correct = 1 + static_cast<int>(stable_hash(p.stem) % 4);
    for (int i = 0; i < 4; ++i)
        if (contains(lower(p.options[i]), "(correct)")) correct = i + 1;
    bool solvable = !contains(lower(p.stem), "unsolvable");
    json out = {{"solution", "Work through the question step by step."},
                {"solvable", solvable},
                {"correct_option", correct}};
    for (int i = 1; i <= 4; ++i)
        out["option_" + std::to_string(i) + "_explanation"] =
            i == correct ? "This is the correct answer." : "A student may have made a slip here.";
    return fenced(out);
}

std::string respond_persona(const ParsedPrompt& p) {
    std::size_t student_words = 0, student_turns = 0, questions = 0;
    for (const auto& t : p.turns) {
        if (t.tutor) continue;
        ++student_turns;
        student_words += words(t.text).size();
        questions += contains(t.text, "?") ? 1 : 0;
    }
    double mean_words = student_turns ? static_cast<double>(student_words) / student_turns : 0.0;
    auto level = [](bool hi, bool lo) { return hi ? "high" : (lo ? "low" : "neutral"); };
    json out = {{"reasoning", "Estimated from turn lengths and question asking."},
                {"Openness", level(questions >= 2, questions == 0)},
                {"Conscientiousness", "neutral"},
                {"Extraversion", level(mean_words > 8, mean_words < 4)},
                {"Agreeableness", "high"},
                {"Neuroticism", level(false, true)}};
    return fenced(out);
}

std::string respond_summary(const ParsedPrompt& p) {
    std::size_t student_turns = 0, words_total = 0, math = 0;
    for (const auto& t : p.turns) {
        if (t.tutor) continue;
        ++student_turns;
        words_total += words(t.text).size();
        math += heuristic_act(t.text) == ActLabel::MathAnswer ? 1 : 0;
    }
    std::ostringstream os;
    os << "The student takes " << student_turns << " turns averaging "
       << (student_turns ? words_total / student_turns : 0) << " words, gives " << math
       << " math answers and responds briefly to the tutor while working on " << p.stem;
    return os.str();
}

std::string after_marker(const std::string& msg, const std::string& marker) {
    auto pos = msg.rfind(marker);
    if (pos == std::string::npos) return {};
    auto start = pos + marker.size();
    auto end = msg.find('\n', start);
    return msg.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& x : sa) inter += sb.count(x);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

std::string respond_judge(const std::string& msg) {
    ParsedPrompt p = parse_prompt(msg);
    std::string gt = after_marker(msg, "\nGround-truth turn: ");
    std::string gt_label = after_marker(msg, "\nGround-truth correctness: ");
    std::string cand = after_marker(msg, "\nCandidate turn: ");
    std::string prev_tutor;
    auto ctx_pos = msg.find("\nGround-truth turn: ");
    if (ctx_pos != std::string::npos) {
        auto tpos = msg.rfind("Tutor: ", ctx_pos);
        if (tpos != std::string::npos) prev_tutor = msg.substr(tpos, ctx_pos - tpos);
    }
    std::string verdict;
    auto wc = words(cand), wg = words(gt);
    if (wc == wg) {
        verdict = gt_label;
    } else {
        auto c = heuristic_correct(cand, prev_tutor.empty() ? "?" : prev_tutor, answer_tokens(p));
        verdict = c ? (*c ? "correct" : "incorrect") : "na";
    }
    if (verdict == "incorrect" && gt_label == "incorrect")
        verdict += jaccard(wc, wg) >= 0.5 ? ", same error" : ", different error";
    return verdict;
}

std::string last_user_text(const ChatRequest& req) {
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it)
        if (it->role == "user") return it->content;
    return {};
}

std::string respond_student(const ChatRequest& req) {
    std::string first = req.messages.empty() ? std::string() : req.messages.front().content;
    ParsedPrompt q = parse_prompt(first);
    std::string tutor = last_user_text(req);
    auto para = tutor.rfind("\n\n");
    if (para != std::string::npos) tutor = tutor.substr(para + 2);
    std::uint64_t h = stable_hash(tutor);
    if (!req.decoding.greedy) h ^= stable_hash(std::to_string(req.decoding.seed)) * 31;
    bool fine_tuned = req.system_prompt == prompts::kStudentFineTuned;
    std::string lt = lower(tutor);
    std::string out;
    if (contains(lt, "bye")) {
        out = "bye thanks";
        out += " ";
        out += prompts::kEndOfDialogue;
        return out;
    }
    std::vector<std::string> numbers;
    {
        std::string cur;
        for (char c : tutor + " ") {
            if (std::isdigit(static_cast<unsigned char>(c)) || (c == '/' && !cur.empty())) {
                cur += c;
            } else if (!cur.empty()) {
                while (!cur.empty() && cur.back() == '/') cur.pop_back();
                if (!cur.empty()) numbers.push_back(cur);
                cur.clear();
            }
        }
    }
    std::string answer = q.correct >= 1 ? q.options[q.correct - 1] : (numbers.empty() ? "2" : numbers.back());
    bool asked = contains(tutor, "?");
    switch (h % 5) {
        case 0: out = asked ? answer : "ok"; break;
        case 1: out = numbers.empty() ? "yes" : numbers.front(); break;
        case 2: out = asked ? "i dont know" : "ok thanks"; break;
        case 3: out = numbers.empty() ? "is it " + q.options[h % 4] + "?" : "so would i use " + numbers.back() + "?"; break;
        default: out = asked ? "is it " + answer + "?" : "oh"; break;
    }
    if (!fine_tuned && (h >> 16) % 2 == 0) out = "Um, " + out;
    return out;
}

std::string respond(const ChatRequest& req) {
    const std::string& sys = req.system_prompt;
    std::string user = req.messages.empty() ? std::string() : req.messages.front().content;
    if (sys == prompts::kActs) return respond_acts(parse_prompt(user));
    if (sys == prompts::kCorrectness) return respond_correctness(parse_prompt(user));
    if (sys == prompts::kKnowledgeComponents) return respond_kcs(parse_prompt(user));
    if (sys == prompts::kSolution) return respond_solution(parse_prompt(user));
    if (sys == prompts::kOcean) return respond_persona(parse_prompt(user));
    if (sys == prompts::kSummary) return respond_summary(parse_prompt(user));
    if (sys == prompts::kJudge) return respond_judge(user);
    if (sys == prompts::kKnowledgeTracing) return stable_hash(user) % 2 ? "True" : "False";
    if (sys == prompts::kStudentFineTuned || sys == prompts::kZeroShot || sys == prompts::kOceanStudent ||
        sys == prompts::kOracleStudent || sys == prompts::kIclStudent || sys == prompts::kReasoningStudent)
        return respond_student(req);
    return "ok";
}

}  // namespace

ChatResponse MockChatBackend::complete(const ChatRequest& req) { return {handler_(req), "stop"}; }

std::shared_ptr<ChatBackend> make_echo_chat() {
    return std::make_shared<MockChatBackend>([](const ChatRequest& r) { return r.system_prompt; });
}

std::shared_ptr<ChatBackend> make_heuristic_chat() { return std::make_shared<MockChatBackend>(respond); }

std::vector<std::vector<double>> HashEmbeddingBackend::embed_batch(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> v(dim_, 0.0);
        for (const auto& w : words(text)) v[stable_hash("w:" + w) % dim_] += 1.0;
        std::string padded = "^" + lower(text) + "$";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
            v[stable_hash("c:" + padded.substr(i, 3)) % dim_] += 0.5;
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 0)
            for (double& x : v) x /= n;
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<double> MockScoringBackend::continuation_logprobs(const std::string& context,
                                                              const std::string& continuation) {
    std::vector<double> out;
    std::istringstream in(continuation);
    std::string tok;
    std::size_t pos = 0;
    while (in >> tok) out.push_back(std::log(token_rule_(context, tok, pos++)));
    return out;
}

std::vector<TokenLogprob> MockScoringBackend::first_token_logprobs(const ChatRequest& req) {
    return first_rule_(req);
}

std::shared_ptr<ScoringBackend> make_uniform_scoring(double p) {
    if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("uniform scoring probability must be in (0,1]");
    return std::make_shared<MockScoringBackend>(
        [p](const std::string&, const std::string&, std::size_t) { return p; },
        [](const ChatRequest&) {
            return std::vector<TokenLogprob>{{"True", std::log(0.5)}, {"False", std::log(0.5)}};
        });
}

std::shared_ptr<ScoringBackend> make_heuristic_scoring() {
    return std::make_shared<MockScoringBackend>(
        [](const std::string& context, const std::string& token, std::size_t pos) {
            std::string tail = context.size() > 200 ? context.substr(context.size() - 200) : context;
            return 0.05 + 0.9 * unit_from_hash(stable_hash(tail + "\x1f" + token + "\x1f" + std::to_string(pos)));
        },
        [](const ChatRequest& req) {
            std::string all = req.system_prompt;
            for (const auto& m : req.messages) all += "\x1e" + m.content;
            double p = 0.2 + 0.6 * unit_from_hash(stable_hash(all));
            return std::vector<TokenLogprob>{
                {"True", std::log(p)}, {"False", std::log(1.0 - p)}, {"Maybe", std::log(1e-4)}};
        });
}

std::shared_ptr<ChatBackend> make_mock_chat(std::string_view url) {
    auto kind = kind_of(url);
    if (kind == "echo") return make_echo_chat();
    if (kind == "heuristic") return make_heuristic_chat();
    throw ParseError("unknown mock chat kind \"" + std::string(kind) + "\"");
}

std::shared_ptr<EmbeddingBackend> make_mock_embedding(std::string_view url, const std::string& model) {
    auto kind = kind_of(url);
    if (kind != "hash") throw ParseError("unknown mock embedding kind \"" + std::string(kind) + "\"");
    auto dim = std::stoul(param(url, "dim", "64"));
    if (dim == 0) throw ParseError("mock embedding dim must be positive");
    return std::make_shared<HashEmbeddingBackend>(dim, model.empty() ? "mock-hash-embed" : model);
}

std::shared_ptr<ScoringBackend> make_mock_scoring(std::string_view url) {
    auto kind = kind_of(url);
    if (kind == "uniform") return make_uniform_scoring(std::stod(param(url, "p", "0.2")));
    if (kind == "heuristic") return make_heuristic_scoring();
    throw ParseError("unknown mock scoring kind \"" + std::string(kind) + "\"");
}

}  // namespace simeval
