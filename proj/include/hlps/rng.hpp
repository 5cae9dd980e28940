#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hlps {

/// mt19937_64 wrapper. Distributions are constructed per draw so the only
/// state is the engine itself, which makes checkpointing exact.
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    /// Independent named stream derived from a run seed.
    Rng(std::uint64_t seed, std::string_view stream);

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);
    std::uint64_t next_u64() { return engine_(); }

    /// Engine state as 32-bit halves, each exactly representable as f64.
    std::vector<double> save_state() const;
    void load_state(const std::vector<double>& halves);

    bool operator==(const Rng& o) const { return engine_ == o.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace hlps
