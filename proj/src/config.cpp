#include "simeval/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "simeval/backends.hpp"
#include "simeval/error.hpp"

namespace simeval {

using json = nlohmann::json;

std::string expand_env(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '$' && i + 1 < s.size() && s[i + 1] == '{') {
            auto end = s.find('}', i + 2);
            if (end == std::string::npos) throw ParseError("unterminated ${ in \"" + s + "\"");
            std::string name = s.substr(i + 2, end - i - 2);
            const char* v = std::getenv(name.c_str());
            if (!v) throw ParseError("environment variable " + name + " is not set");
            out += v;
            i = end;
        } else {
            out += s[i];
        }
    }
    return out;
}

namespace {

json from_node(const toml::node& n) {
    if (auto t = n.as_table()) {
        json j = json::object();
        for (const auto& [k, v] : *t) j[std::string(k.str())] = from_node(v);
        return j;
    }
    if (auto a = n.as_array()) {
        json j = json::array();
        for (const auto& v : *a) j.push_back(from_node(v));
        return j;
    }
    if (auto s = n.as_string()) return expand_env(std::string(s->get()));
    if (auto i = n.as_integer()) return i->get();
    if (auto f = n.as_floating_point()) return f->get();
    if (auto b = n.as_boolean()) return b->get();
    std::ostringstream os;
    if (auto d = n.as_date()) os << *d;
    else if (auto t = n.as_time()) os << *t;
    else if (auto dt = n.as_date_time()) os << *dt;
    return os.str();
}

json expand_json_strings(json j) {
    if (j.is_string()) return expand_env(j.get<std::string>());
    if (j.is_object() || j.is_array())
        for (auto& v : j) v = expand_json_strings(std::move(v));
    return j;
}

Capability capability_from_string(const std::string& s) {
    if (s == "chat") return Capability::chat;
    if (s == "embed") return Capability::embed;
    if (s == "score") return Capability::score;
    throw ParseError("unknown capability \"" + s + "\"");
}

Role role_from_string(const std::string& s) {
    for (Role r : {Role::annotate, Role::judge, Role::student, Role::embed, Role::kt, Role::tutor})
        if (to_string(r) == s) return r;
    throw ParseError("unknown role \"" + s + "\"");
}

BackendsConfig backends_from_document(const json& doc) {
    BackendsConfig cfg;
    try {
        if (auto it = doc.find("cache_dir"); it != doc.end()) cfg.cache_dir = it->get<std::string>();
        const json& list = doc.contains("backend") ? doc.at("backend") : doc.at("backends");
        for (const auto& b : list) {
            BackendConfig c;
            c.name = b.at("name").get<std::string>();
            c.base_url = b.at("base_url").get<std::string>();
            c.model = b.value("model", c.name);
            c.api_key_env = b.value("api_key_env", std::string());
            for (const auto& cap : b.at("capabilities")) c.capabilities.insert(capability_from_string(cap));
            c.char_cap = b.value("char_cap", std::size_t{0});
            c.max_in_flight = b.value("max_in_flight", 4);
            c.requests_per_second = b.value("requests_per_second", 0.0);
            c.retry.max_retries = b.value("max_retries", c.retry.max_retries);
            c.retry.base_delay = std::chrono::milliseconds(b.value("retry_base_ms", 500));
            c.retry.max_delay = std::chrono::milliseconds(b.value("retry_max_ms", 30000));
            cfg.backends.push_back(std::move(c));
        }
        if (auto it = doc.find("roles"); it != doc.end())
            for (const auto& [k, v] : it->items()) cfg.roles[role_from_string(k)] = v.get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid backends config: ") + e.what());
    }
    return cfg;
}

}  // namespace

json parse_toml(const std::string& text, const std::string& source_name) {
    try {
        auto tbl = toml::parse(text, source_name);
        return from_node(tbl);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << source_name << ": " << e.description() << " (line " << e.source().begin.line << ")";
        throw ParseError(os.str());
    }
}

json load_config_document(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    if (path.extension() == ".json") {
        try {
            return expand_json_strings(json::parse(ss.str()));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    return parse_toml(ss.str(), path.string());
}

BackendsConfig load_backends_config(const std::filesystem::path& path) {
    auto cfg = backends_from_document(load_config_document(path));
    if (!cfg.cache_dir.empty() && cfg.cache_dir.is_relative())
        cfg.cache_dir = path.parent_path() / cfg.cache_dir;
    return cfg;
}

BackendsConfig backends_config_from_json(const std::string& text) {
    try {
        return backends_from_document(expand_json_strings(json::parse(text)));
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid backends config: ") + e.what());
    }
}

}  // namespace simeval
