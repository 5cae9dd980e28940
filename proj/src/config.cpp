#include "hlps/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace hlps::cfg {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

bool parse_number(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto r = std::from_chars(b, e, out);
    return r.ec == std::errc() && r.ptr == e;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    if (std::isfinite(v) && v == std::trunc(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof buf, "%.0f", v);
        return buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double back = 0.0;
    // Prefer the shortest text that round-trips.
    for (int prec = 1; prec <= 17; ++prec) {
        char small[64];
        std::snprintf(small, sizeof small, "%.*g", prec, v);
        if (parse_number(small, back) && back == v) return small;
    }
    return buf;
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    std::istringstream in(text);
    std::string raw, section;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_name(section)) throw ConfigError(where + "bad section name '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!valid_name(key)) throw ConfigError(where + "bad key '" + key + "'");
        if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any section");
        if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
        if (value.front() == '"') {
            if (value.size() < 2 || value.back() != '"') throw ConfigError(where + "unterminated string");
            value = value.substr(1, value.size() - 2);
        }
        const std::string full = section + "." + key;
        if (c.has(full)) throw ConfigError(where + "duplicate key '" + full + "'");
        c.entries_[full] = {value, origin, lineno};
    }
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

void Config::set(const std::string& key, const std::string& value, const std::string& origin, int line) {
    const auto dot = key.find('.');
    if (dot == std::string::npos || !valid_name(key.substr(0, dot)) || !valid_name(key.substr(dot + 1)))
        throw ConfigError(origin + ": key '" + key + "' must look like section.name");
    entries_[key] = {value, origin, line};
}

void Config::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must be key=value");
    std::string value = trim(assignment.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    set(trim(assignment.substr(0, eq)), value, "--override");
}

const Config::Entry* Config::find(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

void Config::fail(const Entry& e, const std::string& key, const std::string& what) const {
    throw ConfigError(e.origin + (e.line > 0 ? ":" + std::to_string(e.line) : std::string()) + ": " + key + ": " +
                      what + " (got '" + e.value + "')");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    double v = 0.0;
    if (!parse_number(e->value, v)) fail(*e, key, "expected a number");
    return v;
}

long Config::get_int(const std::string& key, long fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    long v = 0;
    const char* b = e->value.data();
    const char* end = b + e->value.size();
    auto r = std::from_chars(b, end, v);
    if (r.ec != std::errc() || r.ptr != end) {
        // Accept integral floating forms such as 3e5.
        double d = 0.0;
        if (!parse_number(e->value, d) || d != static_cast<double>(static_cast<long>(d)))
            fail(*e, key, "expected an integer");
        v = static_cast<long>(d);
    }
    return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    fail(*e, key, "expected true or false");
}

Eigen::VectorXd Config::get_vector(const std::string& key, const Eigen::VectorXd& fallback) const {
    const Entry* e = find(key);
    if (!e) return fallback;
    const std::string& s = e->value;
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') fail(*e, key, "expected an array [a, b, ...]");
    std::vector<double> vals;
    std::stringstream items(s.substr(1, s.size() - 2));
    std::string item;
    while (std::getline(items, item, ',')) {
        double v = 0.0;
        if (!parse_number(trim(item), v)) fail(*e, key, "array entries must be numbers");
        vals.push_back(v);
    }
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

void Config::reject_unknown(const std::vector<std::string>& allowed) const {
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, e] : entries_) {
        if (!ok.count(key)) {
            throw ConfigError(e.origin + (e.line > 0 ? ":" + std::to_string(e.line) : std::string()) +
                              ": unknown key '" + key + "'");
        }
    }
}

std::vector<std::string> Config::keys() const {
    std::vector<std::string> out;
    for (const auto& kv : entries_) out.push_back(kv.first);
    return out;
}

std::string Config::to_toml() const {
    std::ostringstream out;
    std::string section;
    for (const auto& [key, e] : entries_) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        double num = 0.0;
        const bool bare = e.value == "true" || e.value == "false" || (!e.value.empty() && e.value.front() == '[') ||
                          parse_number(e.value, num);
        out << key.substr(dot + 1) << " = " << (bare ? e.value : "\"" + e.value + "\"") << "\n";
    }
    return out.str();
}

}  // namespace hlps::cfg
