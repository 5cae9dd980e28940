#pragma once

// Variants x seeds over a base configuration, with per-variant summaries
// and paired deltas against a partner variant. Layout under the output
// directory:
//
//   spec.json                      variants, overrides, partners, seeds
//   <variant>/seed_<n>/...          one run directory each (see runner.hpp)
//   table.md, table.csv

#include "hlps/config.hpp"
#include "hlps/runner.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hlps::ablation {

struct Variant {
    std::string id;
    std::vector<std::pair<std::string, std::string>> overrides;
    std::string partner;  // empty: no paired delta
};

struct AblationSpec {
    std::string name;
    cfg::Config base;
    std::vector<Variant> variants;
    std::vector<std::uint64_t> seeds;
    long steps = -1;  // -1: base total_steps
};

/// "fig8": hlps, hlps-bl-a (frozen random projection, no GP, no loss),
/// hlps-bl-b (hinge triplet loss). "noise": hlps and random_projection at
/// sigma 0, 0.1, 0.15. "window": hlps at T = 1, 3, 5.
AblationSpec builtin_spec(const std::string& name, const cfg::Config& base);

cfg::Config variant_config(const cfg::Config& base, const Variant& v);
/// Keys whose resolved values differ between two configurations.
std::vector<std::string> config_diff(const cfg::Config& a, const cfg::Config& b);
/// Throws unless the variant changes exactly its declared keys (or fewer).
void check_declared(const cfg::Config& base, const Variant& v);

struct Summary {
    int n = 0;
    double mean = 0.0;
    double std = 0.0;   // sample standard deviation
    double ci95 = 0.0;  // half-width, Student t
};

double t_critical_95(int df);
Summary summarize(const std::vector<double>& xs);

struct Cell {
    std::string variant;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double final_success = 0.0;
    std::vector<train::MetricsRow> metrics;
};

struct Result {
    std::string name;
    std::vector<Variant> variants;
    std::vector<std::uint64_t> seeds;
    std::vector<Cell> cells;

    const Cell* find(const std::string& variant, std::uint64_t seed) const;
    /// Final success of every successful run of the variant, in seed order.
    std::vector<double> finals(const std::string& variant) const;
    /// a - b over seeds where both runs succeeded.
    std::vector<double> paired_deltas(const std::string& a, const std::string& b) const;
    bool any_failed() const;
};

Result run_ablation(const AblationSpec& spec, const std::filesystem::path& out, int jobs);
/// Rebuilds the result from spec.json and the stored per-run metrics.
Result load_result(const std::filesystem::path& out);

std::string render_markdown(const Result& r);
std::string render_csv(const Result& r);
void write_tables(const Result& r, const std::filesystem::path& out);

}  // namespace hlps::ablation
