#pragma once

// TOML-subset configuration: "[section]" headers, "key = value" lines and
// '#' comments. Values are bare numbers, true/false, quoted or bare strings,
// or flat arrays "[a, b]". Keys are addressed as "section.key".

#include <Eigen/Dense>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hlps::cfg {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config from_file(const std::string& path);

    /// "section.key=value" from the command line.
    void apply_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value, const std::string& origin = "<set>", int line = 0);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    Eigen::VectorXd get_vector(const std::string& key, const Eigen::VectorXd& fallback) const;

    /// Throws for the first key not in the allowed set, naming its line.
    void reject_unknown(const std::vector<std::string>& allowed) const;

    /// Canonical text form, sections and keys sorted.
    std::string to_toml() const;
    std::vector<std::string> keys() const;

private:
    struct Entry {
        std::string value;  // raw text, quotes stripped for strings
        std::string origin;
        int line = 0;
    };
    const Entry* find(const std::string& key) const;
    [[noreturn]] void fail(const Entry& e, const std::string& key, const std::string& what) const;

    std::map<std::string, Entry> entries_;
};

std::string format_double(double v);

}  // namespace hlps::cfg
