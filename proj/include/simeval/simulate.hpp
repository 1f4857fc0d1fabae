#pragma once

// Candidate student turns: prompt rendering per simulation method, ICL retrieval, generation and
// multi-sample generation for the preference-pair pipeline.

#include <optional>
#include <string>
#include <vector>

#include "simeval/backends.hpp"
#include "simeval/core.hpp"
#include "simeval/corpus.hpp"

namespace simeval {

struct SimMethodConfig {
    SimMethod method = SimMethod::zero_shot;
    std::string system;  // label written to candidates; defaults to the method name
    DecodingParams decoding;

    /// Method defaults: greedy decoding, 400 tokens; Reasoning uses medium effort, temperature 1
    /// and a 15000-token budget.
    static SimMethodConfig defaults(SimMethod m);
};

/// Per-dialogue material some methods need.
struct SimInputs {
    const AnnotationSet* annotations = nullptr;  // persona (OCEAN), summary (Oracle), solution
    const Dialogue* icl_example = nullptr;       // ICL
};

/// Chat request for one student slot. The system prompt is the method's template verbatim; the
/// first user message carries the question and the method material; prefix turns alternate
/// tutor -> user, student -> assistant with same-role neighbours merged.
/// Throws PreconditionError when the method's material is missing.
ChatRequest render_prompt(const SimMethodConfig& cfg, const Dialogue& d, const StudentSlot& slot,
                          const SimInputs& in);

/// Method material block placed under the question ("Big Five persona:", "Persona:", ...).
std::string method_block(const SimMethodConfig& cfg, const SimInputs& in);

class RetrievalIndex {
public:
    struct Entry {
        std::string dialogue_id;
        std::vector<double> embedding;
    };

    /// Throws PreconditionError on a duplicate id or a dimension mismatch.
    void add(std::string dialogue_id, std::vector<double> embedding);
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

    /// Entry with the highest cosine similarity; ties go to the lexicographically smallest id.
    /// `exclude` skips one id (the query dialogue itself). Throws PreconditionError when empty and
    /// on dimension mismatch.
    std::string retrieve(const std::vector<double>& query, const std::string& exclude = {}) const;

private:
    std::vector<Entry> entries_;
};

std::string retrieve_icl_example(const RetrievalIndex& index, const std::vector<double>& query,
                                 const std::string& exclude = {});

/// Embeds the oracle summaries of the train-split dialogues that have one.
RetrievalIndex build_retrieval_index(const Corpus& c, Embedder& embedder);

/// Removes the end-of-dialogue sentinel. Returns the cleaned text and whether it was present.
std::pair<std::string, bool> strip_sentinel(std::string_view text);

/// Generates one candidate. Throws PreconditionError("empty candidate") when nothing remains
/// after stripping; backend errors are rethrown as BackendError naming the slot.
CandidateTurn generate_candidate(const SimMethodConfig& cfg, const Dialogue& d, const StudentSlot& slot,
                                 const SimInputs& in, ChatClient& chat, int sample_id = 0);

/// n >= 2 sampled candidates with sample ids 0..n-1. Greedy configs are switched to sampling at
/// the configured temperature; each sample gets its own seed.
std::vector<CandidateTurn> sample_candidates(SimMethodConfig cfg, const Dialogue& d, const StudentSlot& slot,
                                             const SimInputs& in, ChatClient& chat, int n);

struct SimulateOptions {
    SimMethodConfig method;
    int samples = 1;                    // 1 = single greedy candidate, >= 2 = sampling
    std::optional<int> min_student_ordinal;  // skip earlier slots (pair generation)
    int workers = 4;
};

/// Runs generation over every student slot of `targets`. ICL examples are looked up in `index`
/// by each target's summary embedding; the example dialogue comes from `pool`.
std::vector<CandidateTurn> simulate_corpus(const Corpus& targets, const SimulateOptions& opts, ChatClient& chat,
                                           const RetrievalIndex* index = nullptr, const Corpus* pool = nullptr,
                                           Embedder* embedder = nullptr);

}  // namespace simeval
