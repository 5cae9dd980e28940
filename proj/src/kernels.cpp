#include "hlps/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hlps::kernels {

namespace {

// Below this many rows the thread fork costs more than the loop.
constexpr Eigen::Index kParallelRows = 64;

inline double row_distance(const gp::Matrix& s, Eigen::Index i, Eigen::Index j) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
        const double d = s(i, k) - s(j, k);
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {

gp::Matrix pairwise_distances(const gp::Matrix& states) {
    const Eigen::Index n = states.rows();
    gp::Matrix d(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        d(j, j) = 0.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            d(i, j) = row_distance(states, i, j);
            d(j, i) = d(i, j);
        }
    }
    return d;
}

gp::Matrix matern32_covariance(const gp::Matrix& states, double gamma2, double ell) {
    const Eigen::Index n = states.rows();
    gp::Matrix c(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        c(j, j) = gamma2;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            c(i, j) = gp::matern32_from_distance(row_distance(states, i, j), gamma2, ell);
            c(j, i) = c(i, j);
        }
    }
    return c;
}

std::vector<gp::Matrix> filter_chains(const std::vector<ChainProblem>& problems, gp::StationaryForm form) {
    std::vector<gp::Matrix> out(problems.size());
    for (size_t p = 0; p < problems.size(); ++p) {
        out[p] = gp::filter_chain(problems[p].increments, problems[p].F, problems[p].hp, form);
    }
    return out;
}

}  // namespace serial

namespace omp {

gp::Matrix pairwise_distances(const gp::Matrix& states) {
    const Eigen::Index n = states.rows();
    gp::Matrix d(n, n);
#pragma omp parallel for schedule(dynamic, 8) if (n >= kParallelRows)
    for (Eigen::Index j = 0; j < n; ++j) {
        d(j, j) = 0.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double v = row_distance(states, i, j);
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

gp::Matrix matern32_covariance(const gp::Matrix& states, double gamma2, double ell) {
    const Eigen::Index n = states.rows();
    gp::Matrix c(n, n);
#pragma omp parallel for schedule(dynamic, 8) if (n >= kParallelRows)
    for (Eigen::Index j = 0; j < n; ++j) {
        c(j, j) = gamma2;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double v = gp::matern32_from_distance(row_distance(states, i, j), gamma2, ell);
            c(i, j) = v;
            c(j, i) = v;
        }
    }
    return c;
}

std::vector<gp::Matrix> filter_chains(const std::vector<ChainProblem>& problems, gp::StationaryForm form) {
    std::vector<gp::Matrix> out(problems.size());
    const long n = static_cast<long>(problems.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (long p = 0; p < n; ++p) {
        const auto& pr = problems[static_cast<size_t>(p)];
        out[static_cast<size_t>(p)] = gp::filter_chain(pr.increments, pr.F, pr.hp, form);
    }
    return out;
}

}  // namespace omp

}  // namespace hlps::kernels
