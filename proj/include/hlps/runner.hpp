#pragma once

// One training run in its own directory:
//
//   <dir>/manifest.toml    resolved config, seed, artifact version, layout
//   <dir>/metrics.csv      one row per evaluation, appended as it happens
//   <dir>/timing.csv       step, wall-clock seconds (kept apart so metrics
//                          stay bit-reproducible)
//   <dir>/ckpt_<step>.hlps periodic checkpoints (train.checkpoint_every)
//   <dir>/final.hlps       checkpoint after the last step
//   <dir>/diagnostic.hlps  written instead of final.hlps on a non-finite loss
//   <dir>/summary.json     outcome

#include "hlps/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hlps::run {

inline constexpr const char* kArtifactVersion = "hlps-1.0.0";

struct RunOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    long steps = 0;
    std::vector<train::MetricsRow> metrics;
    double seconds = 0.0;
    std::filesystem::path dir;
};

struct RunOptions {
    long steps = -1;  // -1: config total_steps
    /// Source checkpoint whose representation and low-level agent seed the run.
    std::optional<std::filesystem::path> transfer_from;
    bool quiet = true;
};

std::string manifest_text(const train::TrainConfig& cfg, std::uint64_t seed, const RunOptions& opt);

/// Runs to completion; exceptions from training are caught and reported in
/// the outcome (after writing a diagnostic checkpoint where possible).
RunOutcome run_training(const train::TrainConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir,
                        const RunOptions& opt = {});

/// Runs every seed, at most jobs at a time, each in dir/seed_<n>.
std::vector<RunOutcome> run_seeds(const train::TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                  const std::filesystem::path& dir, const RunOptions& opt, int jobs);

std::vector<train::MetricsRow> read_metrics(const std::filesystem::path& csv);
void write_metrics(const std::filesystem::path& csv, const std::vector<train::MetricsRow>& rows);

/// "7" or "0..4" (inclusive).
std::vector<std::uint64_t> parse_seed_range(const std::string& text);

/// First evaluation step with success_rate >= threshold, or nullopt.
std::optional<long> steps_to_threshold(const std::vector<train::MetricsRow>& rows, double threshold);

}  // namespace hlps::run
