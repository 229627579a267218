#pragma once

// Reader for the TOML subset used by experiment configs: [sections], and
// `key = value` lines where a value is a number, a boolean, a quoted string,
// or a single-line array of those. `#` starts a comment.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bss/core.hpp"
#include "bss/csv.hpp"

namespace bss::config {

using Scalar = std::variant<bool, double, std::string>;

struct Value {
    std::vector<Scalar> items;  // one item for scalars
    bool is_array = false;
    std::size_t line = 0;
};

class Document {
public:
    static Document parse(std::istream& in, const std::string& name = "config") {
        Document doc;
        doc.name_ = name;
        std::string raw, section;
        std::size_t lineno = 0;
        while (std::getline(in, raw)) {
            ++lineno;
            const auto at = name + ":" + std::to_string(lineno);
            std::string line = strip(strip_comment(raw));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ValidationError(at + ": unterminated section header");
                section = strip(line.substr(1, line.size() - 2));
                if (section.empty()) throw ValidationError(at + ": empty section name");
                doc.sections_.insert(section);
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ValidationError(at + ": expected key = value");
            std::string key = strip(line.substr(0, eq));
            if (key.empty()) throw ValidationError(at + ": empty key");
            std::string full = section.empty() ? key : section + "." + key;
            if (doc.values_.count(full)) throw ValidationError(at + ": duplicate key '" + full + "'");
            Value v = parse_value(strip(line.substr(eq + 1)), at);
            v.line = lineno;
            doc.values_.emplace(full, std::move(v));
        }
        return doc;
    }

    static Document load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open config " + path.string());
        auto d = parse(in, path.filename().string());
        d.base_ = path.parent_path();
        return d;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::filesystem::path& base_dir() const { return base_; }

    double number(const std::string& key, double fallback) const {
        const auto* v = scalar(key);
        if (!v) return fallback;
        if (const auto* d = std::get_if<double>(v)) return *d;
        throw type_error(key, "a number");
    }
    int integer(const std::string& key, int fallback) const {
        double d = number(key, fallback);
        if (d != static_cast<int>(d)) throw type_error(key, "an integer");
        return static_cast<int>(d);
    }
    bool boolean(const std::string& key, bool fallback) const {
        const auto* v = scalar(key);
        if (!v) return fallback;
        if (const auto* b = std::get_if<bool>(v)) return *b;
        throw type_error(key, "true or false");
    }
    std::string string(const std::string& key, const std::string& fallback) const {
        const auto* v = scalar(key);
        if (!v) return fallback;
        if (const auto* s = std::get_if<std::string>(v)) return *s;
        throw type_error(key, "a quoted string");
    }
    /// Resolves relative paths against the config file's directory. Empty when unset.
    std::string path(const std::string& key) const {
        auto s = string(key, "");
        if (s.empty()) return s;
        std::filesystem::path p(s);
        return (p.is_absolute() ? p : base_ / p).lexically_normal().string();
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        for (const auto& s : it->second.items) {
            const auto* d = std::get_if<double>(&s);
            if (!d) throw type_error(key, "an array of numbers");
            out.push_back(*d);
        }
        return out;
    }
    std::vector<int> integers(const std::string& key, std::vector<int> fallback) const {
        if (!has(key)) return fallback;
        std::vector<int> out;
        for (double d : numbers(key, {})) {
            if (d != static_cast<int>(d)) throw type_error(key, "an array of integers");
            out.push_back(static_cast<int>(d));
        }
        return out;
    }
    std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<std::string> out;
        for (const auto& s : it->second.items) {
            const auto* str = std::get_if<std::string>(&s);
            if (!str) throw type_error(key, "an array of strings");
            out.push_back(*str);
        }
        return out;
    }

    /// Rejects keys outside `known`, so typos surface as validation errors.
    void check_known(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_)
            if (!known.count(k)) throw ValidationError(name_ + ":" + std::to_string(v.line) + ": unknown key '" + k + "'");
    }

private:
    static std::string strip(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return std::string(s);
    }

    static std::string strip_comment(const std::string& s) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) return s.substr(0, i);
        }
        return s;
    }

    static Scalar parse_scalar(const std::string& s, const std::string& at) {
        if (s.empty()) throw ValidationError(at + ": missing value");
        if (s == "true") return true;
        if (s == "false") return false;
        if (s.front() == '"') {
            if (s.size() < 2 || s.back() != '"') throw ValidationError(at + ": unterminated string");
            return s.substr(1, s.size() - 2);
        }
        std::string digits;
        for (char c : s)
            if (c != '_') digits += c;
        return csv::to_double(digits, at);
    }

    static Value parse_value(const std::string& s, const std::string& at) {
        Value v;
        if (!s.empty() && s.front() == '[') {
            if (s.back() != ']') throw ValidationError(at + ": arrays must close on the same line");
            v.is_array = true;
            std::string body = s.substr(1, s.size() - 2);
            std::string item;
            bool quoted = false;
            auto flush = [&] {
                auto t = strip(item);
                if (!t.empty()) v.items.push_back(parse_scalar(t, at));
                item.clear();
            };
            for (char c : body) {
                if (c == '"') quoted = !quoted;
                if (c == ',' && !quoted) {
                    flush();
                    continue;
                }
                item += c;
            }
            flush();
        } else {
            v.items.push_back(parse_scalar(s, at));
        }
        return v;
    }

    const Scalar* scalar(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return nullptr;
        if (it->second.is_array || it->second.items.size() != 1) throw type_error(key, "a single value");
        return &it->second.items.front();
    }

    ValidationError type_error(const std::string& key, const char* want) const {
        auto it = values_.find(key);
        return ValidationError(name_ + ":" + std::to_string(it == values_.end() ? 0 : it->second.line) + ": '" + key +
                               "' must be " + want);
    }

    std::string name_;
    std::filesystem::path base_;
    std::set<std::string> sections_;
    std::map<std::string, Value> values_;
};

/// "HH:MM" to seconds from midnight.
inline int parse_clock(const std::string& s, const std::string& key) {
    int h = -1, m = -1;
    char colon = 0;
    std::istringstream in(s);
    in >> h >> colon >> m;
    if (!in || colon != ':' || h < 0 || h > 24 || m < 0 || m > 59 || (h == 24 && m != 0))
        throw ValidationError("'" + key + "' must be HH:MM, got '" + s + "'");
    return h * 3600 + m * 60;
}

}  // namespace bss::config
