#pragma once

// Constant-memory online inference of the latent GP via the state-space form
// of the Matérn-3/2 kernel. The latent process over the (scalar) distance
// travelled along the trajectory is the SDE
//
//   d/dt [z, z'] = [[0, 1], [-lambda^2, -2 lambda]] [z, z'] + noise,
//   lambda = sqrt(3) / ell,
//
// whose stationary covariance is diag(gamma2, lambda^2 gamma2). Filtering a
// trajectory with consecutive distances reproduces the batch posterior on
// that chain metric exactly.

#include "hlps/gp_core.hpp"

#include <Eigen/Dense>

#include <optional>

namespace hlps::gp {

using Matrix2 = Eigen::Matrix2d;

/// Which stationary covariance seeds the filter. Printed keeps the
/// 3 gamma2 / ell variant only to demonstrate that it breaks exactness.
enum class StationaryForm { Derived, Printed };

/// Per-dimension [value, derivative] means sharing one 2x2 covariance.
struct Belief {
    Eigen::Matrix<double, 2, Eigen::Dynamic> mu;  // 2 x d
    Matrix2 Sigma;
    std::optional<Vector> last_state;

    Eigen::Index latent_dim() const { return mu.cols(); }
    /// h^T mu for every latent dimension.
    Vector observed_mean() const { return mu.row(0).transpose(); }
};

struct EvolutionOperator {
    Matrix2 Psi;
    Matrix2 Omega;
};

Matrix2 stationary_covariance(const GpHyperparams& hp, StationaryForm form = StationaryForm::Derived);

Belief initial_belief(const GpHyperparams& hp, Eigen::Index latent_dim,
                      StationaryForm form = StationaryForm::Derived);

/// Psi = exp(A delta_s) in closed form; Omega = Sigma0 - Psi Sigma0 Psi^T.
EvolutionOperator evolution(const GpHyperparams& hp, double delta_s,
                            StationaryForm form = StationaryForm::Derived);

Belief predict(const Belief& belief, const EvolutionOperator& op);

/// Condition on encoder output f (length d) with observation model h = (1, 0).
Belief update(const Belief& belief, const Eigen::Ref<const Vector>& f, const GpHyperparams& hp);

/// Advance to a new raw state: evolve by D(s, last_state) (zero for the
/// first state of an episode), predict, then update with f.
Belief step(const Belief& belief, const Eigen::Ref<const Vector>& state, const Eigen::Ref<const Vector>& f,
            const GpHyperparams& hp, StationaryForm form = StationaryForm::Derived);

/// Filtered h^T mu after every state; N x d. Consecutive Euclidean distances
/// between raw state rows drive the evolution.
Matrix filter_trajectory(const Matrix& states, const Matrix& F, const GpHyperparams& hp,
                         StationaryForm form = StationaryForm::Derived);

/// Same recursion driven directly by scalar increments (increments(0) unused).
Matrix filter_chain(const Vector& increments, const Matrix& F, const GpHyperparams& hp,
                    StationaryForm form = StationaryForm::Derived);

}  // namespace hlps::gp
