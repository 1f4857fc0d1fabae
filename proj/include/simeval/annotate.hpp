#pragma once

// Runs the annotation prompts over dialogues and parses the model output into AnnotationSets.

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "simeval/backends.hpp"
#include "simeval/core.hpp"
#include "simeval/corpus.hpp"

namespace simeval {

/// Strict JSON parse with one repair pass (markdown fences, surrounding prose, trailing commas).
/// Throws ParseError when the repaired text still does not parse.
nlohmann::json parse_model_json(std::string_view raw);

/// Optional cleanup applied to reasoning-model output before JSON parsing.
struct OutputCleaner {
    bool strip_think_blocks = true;  // <think>...</think>
    std::string strip_regex;         // removed wherever it matches (ECMAScript syntax), empty = off

    std::string operator()(std::string_view raw) const;
};

// Parsers. Each throws ParseError describing the first contract violation.
std::map<int, ActLabel> parse_acts(const Dialogue& d, std::string_view raw);
std::map<int, CorrectnessLabel> parse_correctness(const Dialogue& d, std::string_view raw);
std::map<int, std::set<std::string>> parse_kcs(const Dialogue& d, std::string_view raw);
SolutionRecord parse_solution(std::string_view raw);
OceanPersona parse_persona(std::string_view raw);
std::string parse_summary(std::string_view raw);

/// The act assigned to one student turn, ignoring the rest of the response.
ActLabel parse_act_for_turn(std::string_view raw, int turn_index);

/// System prompt + user message for one annotation kind. The correct answer (from the solution
/// annotation or the question itself) is shown when known, except for the solution prompt.
ChatRequest annotation_request(AnnotationKind kind, const Dialogue& d, const AnnotationSet& existing);

struct AnnotationJob {
    AnnotationKind kind = AnnotationKind::acts;
    std::string dialogue_id;
    std::string raw_response;
    bool ok = false;
    std::string error;
};

struct AnnotateOptions {
    int max_tokens = 4000;
    OutputCleaner cleaner;
};

/// Sends one annotation request and merges the parsed result into `set`. Parse failures set the
/// matching failure flag (acts / correctness / kcs) instead of throwing; backend errors propagate.
AnnotationJob annotate_one(AnnotationKind kind, const Dialogue& d, AnnotationSet& set, ChatClient& chat,
                           const AnnotateOptions& opts = {});

// Single-purpose entry points. These throw ParseError instead of flagging.
std::map<int, ActLabel> annotate_acts(const Dialogue& d, ChatClient& chat);
std::map<int, CorrectnessLabel> annotate_correctness(const Dialogue& d, ChatClient& chat);
std::map<int, std::set<std::string>> annotate_kcs(const Dialogue& d, ChatClient& chat);
SolutionRecord annotate_solution(const Question& q, ChatClient& chat);
OceanPersona annotate_persona(const Dialogue& d, ChatClient& chat);
std::string annotate_summary(const Dialogue& d, ChatClient& chat);

/// Annotates every dialogue for each kind, running dialogue-level jobs on `workers` threads.
/// Results are merged into the corpus by the calling thread. Jobs are returned in
/// (dialogue order, kind order).
std::vector<AnnotationJob> annotate_corpus(Corpus& c, const std::vector<AnnotationKind>& kinds,
                                           ChatClient& chat, int workers = 4, const AnnotateOptions& opts = {});

}  // namespace simeval
