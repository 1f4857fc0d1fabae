#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace simeval {

/// Reads a TOML (or .json) config file into a JSON document, expanding `${VAR}` in strings from the
/// environment. Unset variables raise ParseError.
nlohmann::json load_config_document(const std::filesystem::path& path);

nlohmann::json parse_toml(const std::string& text, const std::string& source_name = "<string>");

std::string expand_env(const std::string& s);

}  // namespace simeval
