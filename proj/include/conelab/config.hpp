#pragma once

// Flat key = value experiment files. `[section]` headers prefix the keys that
// follow with "section."; dotted keys may also be written out in full. `#` and
// `;` start comments. Values are validated against a per-kind schema before use.

#include "conelab/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace conelab {

/// A configuration problem; `key` names the offending field when there is one.
class ConfigError : public Error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : Error(key.empty() ? what : "'" + key + "': " + what), key_(key) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

enum class FieldType { string, real, integer, boolean, reals, path };

struct FieldSpec {
    FieldType type = FieldType::string;
    std::optional<std::string> fallback;  ///< default value text, none when optional without default
    std::string help;
};

using Schema = std::map<std::string, FieldSpec>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline bool valid_key(const std::string& k) {
    if (k.empty() || k.front() == '.' || k.back() == '.') return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
    return k.find("..") == std::string::npos;
}

}  // namespace detail

class Config {
public:
    static Config parse(std::istream& in, const std::string& source = "<config>") {
        Config c;
        c.source_ = source;
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto cut = line.find_first_of("#;");
            if (cut != std::string::npos) line.erase(cut);
            line = detail::trim(line);
            if (line.empty()) continue;
            const std::string where = source + ":" + std::to_string(lineno);
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError("", where + ": unterminated section header");
                section = detail::trim(line.substr(1, line.size() - 2));
                if (!section.empty() && !detail::valid_key(section))
                    throw ConfigError(section, where + ": malformed section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("", where + ": expected 'key = value'");
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string full = section.empty() ? key : section + "." + key;
            if (!detail::valid_key(full)) throw ConfigError(full, where + ": malformed key");
            if (c.values_.count(full)) throw ConfigError(full, where + ": duplicate key");
            c.values_[full] = detail::trim(line.substr(eq + 1));
        }
        return c;
    }

    static Config parse_string(const std::string& text, const std::string& source = "<string>") {
        std::istringstream in(text);
        return parse(in, source);
    }

    static Config load(const std::filesystem::path& p) {
        std::ifstream in(p);
        if (!in) throw ConfigError("", "cannot read config file '" + p.string() + "'");
        Config c = parse(in, p.string());
        c.dir_ = p.parent_path();
        return c;
    }

    const std::string& source() const noexcept { return source_; }
    const std::filesystem::path& directory() const noexcept { return dir_; }
    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Checks every key against the schema and every value against its type, then
    /// fills in defaults. Unknown keys name the closest known key.
    void validate(const Schema& schema) {
        for (const auto& [k, v] : values_) {
            const auto it = schema.find(k);
            if (it == schema.end()) {
                std::string best;
                std::size_t dist = 3;
                for (const auto& [known, spec] : schema) {
                    const std::size_t d = detail::edit_distance(k, known);
                    if (d < dist) dist = d, best = known;
                }
                throw ConfigError(k, "unknown key" + (best.empty() ? std::string() : " (did you mean '" + best + "'?)"));
            }
            check_value(k, it->second.type, v);
        }
        for (const auto& [k, spec] : schema)
            if (!values_.count(k) && spec.fallback) values_[k] = *spec.fallback;
    }

    std::string str(const std::string& key) const { return require(key); }
    std::optional<std::string> opt_str(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end() || it->second.empty()) return std::nullopt;
        return it->second;
    }
    double real(const std::string& key) const { return to_real(key, require(key)); }
    std::optional<double> opt_real(const std::string& key) const {
        const auto s = opt_str(key);
        return s ? std::optional<double>(to_real(key, *s)) : std::nullopt;
    }
    long long integer(const std::string& key) const { return to_integer(key, require(key)); }
    bool boolean(const std::string& key) const { return to_boolean(key, require(key)); }
    std::vector<double> reals(const std::string& key) const { return to_reals(key, require(key)); }
    std::vector<std::string> strings(const std::string& key) const {
        std::vector<std::string> out;
        std::stringstream ss(require(key));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = detail::trim(tok);
            if (!tok.empty()) out.push_back(tok);
        }
        return out;
    }
    /// Relative paths resolve against the config file's directory.
    std::filesystem::path path(const std::string& key) const {
        std::filesystem::path p(require(key));
        return p.is_absolute() || dir_.empty() ? p : dir_ / p;
    }

    double positive(const std::string& key) const {
        const double v = real(key);
        if (!(v > 0.0)) throw ConfigError(key, "must be positive, got " + str(key));
        return v;
    }
    long long at_least(const std::string& key, long long lo) const {
        const long long v = integer(key);
        if (v < lo) throw ConfigError(key, "must be at least " + std::to_string(lo) + ", got " + str(key));
        return v;
    }
    std::string one_of(const std::string& key, const std::vector<std::string>& options) const {
        const std::string v = str(key);
        if (std::find(options.begin(), options.end(), v) != options.end()) return v;
        std::string list;
        for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
        throw ConfigError(key, "'" + v + "' is not one of " + list);
    }

    /// Canonical text: sorted keys, one per line.
    std::string echo() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

private:
    std::string require(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(key, "required key is missing");
        return it->second;
    }

    static double to_real(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used == v.size() && std::isfinite(d)) return d;
        } catch (const std::exception&) {
        }
        throw ConfigError(key, "'" + v + "' is not a finite number");
    }
    static long long to_integer(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const long long i = std::stoll(v, &used);
            if (used == v.size()) return i;
        } catch (const std::exception&) {
        }
        throw ConfigError(key, "'" + v + "' is not an integer");
    }
    static bool to_boolean(const std::string& key, const std::string& v) {
        if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
        if (v == "false" || v == "no" || v == "0" || v == "off") return false;
        throw ConfigError(key, "'" + v + "' is not a boolean");
    }
    static std::vector<double> to_reals(const std::string& key, const std::string& v) {
        std::vector<double> out;
        std::stringstream ss(v);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(to_real(key, detail::trim(tok)));
        return out;
    }
    static void check_value(const std::string& key, FieldType t, const std::string& v) {
        switch (t) {
            case FieldType::real: to_real(key, v); break;
            case FieldType::integer: to_integer(key, v); break;
            case FieldType::boolean: to_boolean(key, v); break;
            case FieldType::reals:
                if (!v.empty()) to_reals(key, v);
                break;
            case FieldType::path:
                if (v.empty()) throw ConfigError(key, "empty path");
                break;
            case FieldType::string: break;
        }
    }

    std::string source_;
    std::filesystem::path dir_;
    std::map<std::string, std::string> values_;
};

}  // namespace conelab
