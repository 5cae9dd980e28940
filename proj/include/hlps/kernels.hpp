#pragma once

// Data-parallel inner loops. Each kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::omp with identical
// results (every output element is computed by exactly one thread in the
// same arithmetic order, so the two agree bit-for-bit).

#include "hlps/gp_core.hpp"
#include "hlps/gp_statespace.hpp"

#include <vector>

namespace hlps::kernels {

/// One independent filtering problem on a scalar-distance chain.
struct ChainProblem {
    gp::Vector increments;
    gp::Matrix F;
    gp::GpHyperparams hp;
};

namespace serial {
gp::Matrix pairwise_distances(const gp::Matrix& states);
gp::Matrix matern32_covariance(const gp::Matrix& states, double gamma2, double ell);
std::vector<gp::Matrix> filter_chains(const std::vector<ChainProblem>& problems,
                                      gp::StationaryForm form = gp::StationaryForm::Derived);
}  // namespace serial

namespace omp {
gp::Matrix pairwise_distances(const gp::Matrix& states);
gp::Matrix matern32_covariance(const gp::Matrix& states, double gamma2, double ell);
std::vector<gp::Matrix> filter_chains(const std::vector<ChainProblem>& problems,
                                      gp::StationaryForm form = gp::StationaryForm::Derived);
}  // namespace omp

int max_threads();

}  // namespace hlps::kernels
