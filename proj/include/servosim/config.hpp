#pragma once

// Structured-text documents: UTF-8 key/value pairs grouped under repeatable
// [section] headers. Shared by scenario files and run configs.

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "servosim/geometry.hpp"

namespace servosim {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigSection {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(std::string_view key) const {
        for (const auto& [k, v] : entries)
            if (k == key) return &v;
        return nullptr;
    }
};

struct ConfigDoc {
    std::vector<ConfigSection> sections;

    std::vector<const ConfigSection*> all(std::string_view name) const {
        std::vector<const ConfigSection*> out;
        for (const auto& s : sections)
            if (s.name == name) out.push_back(&s);
        return out;
    }

    const ConfigSection* first(std::string_view name) const {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline ConfigDoc parse_config(std::string_view text) {
    ConfigDoc doc;
    ConfigSection* cur = nullptr;
    size_t pos = 0;
    int lineno = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
            std::string_view name = detail::trim(line.substr(1, line.size() - 2));
            if (name.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            doc.sections.push_back({std::string(name), {}});
            cur = &doc.sections.back();
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string_view key = detail::trim(line.substr(0, eq));
        std::string_view val = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!cur)
            throw ConfigError("line " + std::to_string(lineno) + ": entry before any [section]");
        cur->entries.emplace_back(std::string(key), std::string(val));
    }
    return doc;
}

inline ConfigDoc load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---- typed accessors ----

inline double parse_double(const std::string& s, const std::string& what) {
    const char* b = s.c_str();
    char* end = nullptr;
    double v = std::strtod(b, &end);
    if (end == b || detail::trim(std::string_view(end)) != "")
        throw ConfigError(what + ": not a number: '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& what) {
    long v = 0;
    auto sv = detail::trim(s);
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (ec != std::errc{} || p != sv.data() + sv.size())
        throw ConfigError(what + ": not an integer: '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s, const std::string& what) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(what + ": not a boolean: '" + s + "'");
}

inline std::vector<double> parse_numbers(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) out.push_back(parse_double(tok, what));
    return out;
}

inline Vec3 parse_vec3(const std::string& s, const std::string& what) {
    auto v = parse_numbers(s, what);
    if (v.size() != 3) throw ConfigError(what + ": expected 3 numbers, got " + std::to_string(v.size()));
    return {v[0], v[1], v[2]};
}

// Section readers with defaults; every getter names the entry in errors.
struct SectionReader {
    const ConfigSection& sec;

    bool has(std::string_view key) const { return sec.find(key) != nullptr; }

    std::string str(std::string_view key, const std::string& def = "") const {
        const std::string* v = sec.find(key);
        return v ? *v : def;
    }

    std::string require(std::string_view key) const {
        const std::string* v = sec.find(key);
        if (!v) throw ConfigError("[" + sec.name + "] missing required key '" + std::string(key) + "'");
        return *v;
    }

    double num(std::string_view key, double def) const {
        const std::string* v = sec.find(key);
        return v ? parse_double(*v, ctx(key)) : def;
    }

    double require_num(std::string_view key) const { return parse_double(require(key), ctx(key)); }

    long integer(std::string_view key, long def) const {
        const std::string* v = sec.find(key);
        return v ? parse_long(*v, ctx(key)) : def;
    }

    long require_int(std::string_view key) const { return parse_long(require(key), ctx(key)); }

    bool boolean(std::string_view key, bool def) const {
        const std::string* v = sec.find(key);
        return v ? parse_bool(*v, ctx(key)) : def;
    }

    Vec3 vec3(std::string_view key, const Vec3& def) const {
        const std::string* v = sec.find(key);
        return v ? parse_vec3(*v, ctx(key)) : def;
    }

    Vec3 require_vec3(std::string_view key) const { return parse_vec3(require(key), ctx(key)); }

    std::vector<double> numbers(std::string_view key) const {
        const std::string* v = sec.find(key);
        return v ? parse_numbers(*v, ctx(key)) : std::vector<double>{};
    }

  private:
    std::string ctx(std::string_view key) const { return "[" + sec.name + "] " + std::string(key); }
};

}  // namespace servosim
