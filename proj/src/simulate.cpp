#include "simeval/simulate.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "simeval/annotate.hpp"
#include "simeval/error.hpp"
#include "simeval/mock.hpp"
#include "simeval/prompts.hpp"

namespace simeval {

namespace {

std::string_view system_prompt_for(SimMethod m) {
    switch (m) {
        case SimMethod::sft_backend: return prompts::kStudentFineTuned;
        case SimMethod::zero_shot: return prompts::kZeroShot;
        case SimMethod::ocean: return prompts::kOceanStudent;
        case SimMethod::oracle: return prompts::kOracleStudent;
        case SimMethod::icl: return prompts::kIclStudent;
        case SimMethod::reasoning: return prompts::kReasoningStudent;
        case SimMethod::external: break;
    }
    throw PreconditionError("external candidates are ingested, not generated");
}

void push_merged(std::vector<ChatMessage>& msgs, std::string role, const std::string& content) {
    if (!msgs.empty() && msgs.back().role == role) {
        msgs.back().content += "\n\n" + content;
        return;
    }
    msgs.push_back({std::move(role), content});
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

SimMethodConfig SimMethodConfig::defaults(SimMethod m) {
    SimMethodConfig c;
    c.method = m;
    c.system = std::string(to_string(m));
    c.decoding.greedy = true;
    c.decoding.max_tokens = 400;
    if (m == SimMethod::reasoning) {
        c.decoding.greedy = false;
        c.decoding.temperature = 1.0;
        c.decoding.max_tokens = 15000;
        c.decoding.reasoning_effort = "medium";
    }
    return c;
}

std::string method_block(const SimMethodConfig& cfg, const SimInputs& in) {
    switch (cfg.method) {
        case SimMethod::ocean:
            if (!in.annotations || !in.annotations->persona) throw PreconditionError("OCEAN requires a persona");
            return "Big Five persona:\n" + prompts::render_persona(*in.annotations->persona);
        case SimMethod::oracle:
            if (!in.annotations || !in.annotations->oracle_summary)
                throw PreconditionError("Oracle requires a summary");
            return "Persona:\n" + *in.annotations->oracle_summary + "\n";
        case SimMethod::icl:
            if (!in.icl_example) throw PreconditionError("ICL requires an example dialogue (empty index?)");
            return "Example dialogue:\n" + prompts::render_plain_turns(in.icl_example->turns);
        default: return {};
    }
}

ChatRequest render_prompt(const SimMethodConfig& cfg, const Dialogue& d, const StudentSlot& slot,
                          const SimInputs& in) {
    ChatRequest req;
    req.system_prompt = std::string(system_prompt_for(cfg.method));
    req.decoding = cfg.decoding;

    std::optional<int> answer = d.question.correct_option;
    if (in.annotations && in.annotations->solution) answer = in.annotations->solution->correct_option;
    std::string first = prompts::render_question(d.question, answer);
    if (auto block = method_block(cfg, in); !block.empty()) first += "\n" + block;
    while (!first.empty() && first.back() == '\n') first.pop_back();

    req.messages.push_back({"user", first});
    for (const auto& t : slot.prefix)
        push_merged(req.messages, t.speaker == Speaker::tutor ? "user" : "assistant", t.text);
    return req;
}

void RetrievalIndex::add(std::string dialogue_id, std::vector<double> embedding) {
    for (const auto& e : entries_) {
        if (e.dialogue_id == dialogue_id) throw PreconditionError("duplicate index id " + dialogue_id);
        if (e.embedding.size() != embedding.size())
            throw PreconditionError("index dimension mismatch for " + dialogue_id);
    }
    if (embedding.empty()) throw PreconditionError("empty embedding for " + dialogue_id);
    entries_.push_back({std::move(dialogue_id), std::move(embedding)});
}

std::string RetrievalIndex::retrieve(const std::vector<double>& query, const std::string& exclude) const {
    const Entry* best = nullptr;
    double best_sim = 0.0;
    for (const auto& e : entries_) {
        if (e.dialogue_id == exclude) continue;
        if (e.embedding.size() != query.size())
            throw PreconditionError("query dimension " + std::to_string(query.size()) + " does not match index " +
                                    std::to_string(e.embedding.size()));
        double s = cosine(e.embedding, query);
        if (!best || s > best_sim || (s == best_sim && e.dialogue_id < best->dialogue_id)) {
            best = &e;
            best_sim = s;
        }
    }
    if (!best) throw PreconditionError("empty retrieval index");
    return best->dialogue_id;
}

std::string retrieve_icl_example(const RetrievalIndex& index, const std::vector<double>& query,
                                 const std::string& exclude) {
    return index.retrieve(query, exclude);
}

RetrievalIndex build_retrieval_index(const Corpus& c, Embedder& embedder) {
    std::vector<std::string> ids, texts;
    for (const auto& d : c.dialogues) {
        if (d.split != Split::train) continue;
        const auto* a = c.annotations_for(d.id);
        if (!a || !a->oracle_summary) continue;
        ids.push_back(d.id);
        texts.push_back(*a->oracle_summary);
    }
    RetrievalIndex index;
    if (texts.empty()) return index;
    auto vecs = embedder.embed(texts);
    for (std::size_t i = 0; i < ids.size(); ++i) index.add(ids[i], std::move(vecs[i].values));
    return index;
}

std::pair<std::string, bool> strip_sentinel(std::string_view text) {
    std::string s(text);
    bool found = false;
    for (auto pos = s.find(prompts::kEndOfDialogue); pos != std::string::npos; pos = s.find(prompts::kEndOfDialogue)) {
        s.erase(pos, prompts::kEndOfDialogue.size());
        found = true;
    }
    return {trim(s), found};
}

CandidateTurn generate_candidate(const SimMethodConfig& cfg, const Dialogue& d, const StudentSlot& slot,
                                 const SimInputs& in, ChatClient& chat, int sample_id) {
    auto req = render_prompt(cfg, d, slot, in);
    const std::string where = " (slot " + d.id + ":" + std::to_string(slot.turn_index) + ")";
    ChatResponse resp;
    try {
        resp = chat.chat_complete(std::move(req));
    } catch (const ContextLengthError& e) {
        throw ContextLengthError(e.what() + where);
    } catch (const AuthError& e) {
        throw AuthError(e.what() + where);
    } catch (const BackendError& e) {
        throw BackendError(e.what() + where);
    }
    auto [text, ended] = strip_sentinel(OutputCleaner{}(resp.text));
    if (text.empty()) throw PreconditionError("empty candidate" + where);
    CandidateTurn c;
    c.dialogue_id = d.id;
    c.turn_index = slot.turn_index;
    c.text = std::move(text);
    c.method = cfg.method;
    c.system = cfg.system.empty() ? std::string(to_string(cfg.method)) : cfg.system;
    c.sample_id = sample_id;
    c.ended_dialogue = ended;
    return c;
}

std::vector<CandidateTurn> sample_candidates(SimMethodConfig cfg, const Dialogue& d, const StudentSlot& slot,
                                             const SimInputs& in, ChatClient& chat, int n) {
    if (n < 2) throw PreconditionError("sample_candidates needs n >= 2, got " + std::to_string(n));
    cfg.decoding.greedy = false;
    const auto base_seed = cfg.decoding.seed;
    std::vector<CandidateTurn> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        cfg.decoding.seed =
            base_seed ^ stable_hash(d.id + ":" + std::to_string(slot.turn_index) + ":" + std::to_string(i));
        out.push_back(generate_candidate(cfg, d, slot, in, chat, i));
    }
    return out;
}

std::vector<CandidateTurn> simulate_corpus(const Corpus& targets, const SimulateOptions& opts, ChatClient& chat,
                                           const RetrievalIndex* index, const Corpus* pool, Embedder* embedder) {
    const std::size_t n = targets.dialogues.size();
    std::vector<std::vector<CandidateTurn>> per(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};

    auto one = [&](std::size_t i) {
        const Dialogue& d = targets.dialogues[i];
        SimInputs in;
        in.annotations = targets.annotations_for(d.id);
        if (opts.method.method == SimMethod::icl) {
            if (!index || !pool || !embedder) throw PreconditionError("ICL needs a retrieval index and pool");
            if (!in.annotations || !in.annotations->oracle_summary)
                throw PreconditionError("ICL retrieval needs a summary for " + d.id);
            auto q = embedder->embed_one(*in.annotations->oracle_summary);
            in.icl_example = pool->find(index->retrieve(q.values, d.id));
            if (!in.icl_example) throw PreconditionError("retrieved dialogue missing from pool");
        }
        for (const auto& slot : student_turn_slots(d)) {
            if (opts.min_student_ordinal && slot.student_ordinal < *opts.min_student_ordinal) continue;
            if (opts.samples >= 2) {
                for (auto& c : sample_candidates(opts.method, d, slot, in, chat, opts.samples))
                    per[i].push_back(std::move(c));
            } else {
                per[i].push_back(generate_candidate(opts.method, d, slot, in, chat, 0));
            }
        }
    };
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                one(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool_threads;
    for (int w = 0; w < std::max(1, opts.workers); ++w) pool_threads.emplace_back(work);
    for (auto& t : pool_threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<CandidateTurn> out;
    for (auto& v : per)
        for (auto& c : v) out.push_back(std::move(c));
    return out;
}

}  // namespace simeval
