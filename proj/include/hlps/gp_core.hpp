#pragma once

#include "hlps/autodiff.hpp"

#include <Eigen/Dense>

namespace hlps::gp {

using ad::Matrix;
using ad::Var;
using ad::Vector;

inline constexpr double kMinLengthScale = 1e-4;

/// Kernel magnitude, length-scale and observation noise, stored as logs so
/// unconstrained gradient steps keep them positive.
struct GpHyperparams {
    double log_gamma2 = 0.0;
    double log_ell = 0.0;
    double log_sigma2 = 0.0;

    static GpHyperparams from_natural(double gamma2, double ell, double sigma2);

    double gamma2() const;
    double ell() const;  // floored at kMinLengthScale
    double sigma2() const;

    /// Throws std::invalid_argument unless every exponentiated field is
    /// finite and strictly positive.
    void validate() const;
};

/// Ordered support states (rows) and their encoder outputs (rows).
struct SupportWindow {
    Matrix states;  // N x ds
    Matrix F;       // N x d

    Eigen::Index size() const { return states.rows(); }
    void validate() const;
};

struct BatchPosterior {
    Matrix mean;  // N x d
    Matrix var;   // N x d, identical columns
};

/// gamma2 * (1 + sqrt(3) D / ell) * exp(-sqrt(3) D / ell).
double matern32_from_distance(double distance, double gamma2, double ell);
double matern32(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, const GpHyperparams& hp);

/// Pairwise Euclidean distances between rows.
Matrix distance_matrix(const Matrix& states);
/// Distances along a 1-D chain: D(a, b) = |x_a - x_b| with x the cumulative
/// sum of the increments (first increment ignored, x_0 = 0).
Matrix chain_distance_matrix(const Vector& increments);

Matrix covariance_matrix(const Matrix& states, const GpHyperparams& hp);
Matrix covariance_from_distances(const Matrix& distances, const GpHyperparams& hp);

/// Posterior over a support window; the solve runs on a Cholesky factor of
/// C + sigma2 I with jitter escalation.
BatchPosterior batch_posterior(const SupportWindow& window, const GpHyperparams& hp);
BatchPosterior batch_posterior_from_distances(const Matrix& distances, const Matrix& F, const GpHyperparams& hp);

// ---- differentiable route ------------------------------------------------

/// Tape handles of the three log hyperparameters (each 1x1).
struct HyperVars {
    Var log_gamma2;
    Var log_ell;
    Var log_sigma2;
};

/// Splits a 1x3 tape node [log_gamma2, log_ell, log_sigma2].
HyperVars split_hyperparams(const Var& packed);
HyperVars constant_hyperparams(ad::Tape& tape, const GpHyperparams& hp);

/// Fused Matérn-3/2 covariance over a constant distance matrix, with
/// gradients to log_gamma2 and log_ell.
Var covariance_var(const Matrix& distances, const HyperVars& hv);
/// C (C + sigma2 I)^{-1} F.
Var posterior_mean_var(const Matrix& distances, const Var& F, const HyperVars& hv);
/// diag(C - C (C + sigma2 I)^{-1} C) as an N x 1 column.
Var posterior_variance_var(const Matrix& distances, const HyperVars& hv);

}  // namespace hlps::gp
