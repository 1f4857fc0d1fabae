#pragma once

// JSON mappings for the interchange records. Field names are part of the file formats.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "simeval/core.hpp"
#include "simeval/corpus.hpp"

namespace simeval {

using json = nlohmann::json;

json to_json(const Dialogue& d);
Dialogue dialogue_from_json(const json& j);

json to_json(const Question& q);
Question question_from_json(const json& j);

json to_json(const OceanPersona& p);
OceanPersona persona_from_json(const json& j);

json to_json(const SolutionRecord& s);
SolutionRecord solution_from_json(const json& j);

json to_json(const CandidateTurn& c);
CandidateTurn candidate_from_json(const json& j);

/// Annotation payload for one kind; absent kinds yield null.
json annotation_payload(const AnnotationSet& a, AnnotationKind kind);
void apply_annotation_payload(AnnotationSet& a, AnnotationKind kind, const json& payload);

// JSONL helpers. read_jsonl throws IoError if unreadable and ParseError (with line number) on
// malformed lines.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
std::string dump_line(const json& j);

void write_candidates(const std::filesystem::path& path, const std::vector<CandidateTurn>& c);
std::vector<CandidateTurn> read_candidates(const std::filesystem::path& path);

/// Accessors that raise ParseError naming the missing/mistyped field.
const json& require_field(const json& j, const char* key);
std::string require_string(const json& j, const char* key);
int require_int(const json& j, const char* key);

}  // namespace simeval
