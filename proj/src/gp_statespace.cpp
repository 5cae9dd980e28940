#include "hlps/gp_statespace.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hlps::gp {

namespace {
constexpr double kSqrt3 = 1.7320508075688772;
}

Matrix2 stationary_covariance(const GpHyperparams& hp, StationaryForm form) {
    const double g = hp.gamma2(), l = hp.ell();
    const double second = form == StationaryForm::Derived ? 3.0 * g / (l * l) : 3.0 * g / l;
    Matrix2 s;
    s << g, 0.0, 0.0, second;
    return s;
}

Belief initial_belief(const GpHyperparams& hp, Eigen::Index latent_dim, StationaryForm form) {
    hp.validate();
    Belief b;
    b.mu = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, latent_dim);
    b.Sigma = stationary_covariance(hp, form);
    return b;
}

EvolutionOperator evolution(const GpHyperparams& hp, double delta_s, StationaryForm form) {
    if (!std::isfinite(delta_s)) throw std::invalid_argument("evolution: non-finite distance");
    if (delta_s < 0.0) throw std::invalid_argument("evolution: negative distance " + std::to_string(delta_s));
    const double lambda = kSqrt3 / hp.ell();
    const double ld = lambda * delta_s;
    const double decay = std::exp(-ld);
    EvolutionOperator op;
    op.Psi << decay * (1.0 + ld), decay * delta_s, -decay * lambda * ld, decay * (1.0 - ld);
    const Matrix2 s0 = stationary_covariance(hp, form);
    op.Omega = s0 - op.Psi * s0 * op.Psi.transpose();
    op.Omega = 0.5 * (op.Omega + op.Omega.transpose()).eval();
    return op;
}

Belief predict(const Belief& belief, const EvolutionOperator& op) {
    Belief out;
    out.mu = op.Psi * belief.mu;
    out.Sigma = op.Psi * belief.Sigma * op.Psi.transpose() + op.Omega;
    out.last_state = belief.last_state;
    return out;
}

Belief update(const Belief& belief, const Eigen::Ref<const Vector>& f, const GpHyperparams& hp) {
    if (f.size() != belief.latent_dim()) {
        throw std::invalid_argument("update: observation has " + std::to_string(f.size()) + " dims, belief has " +
                                    std::to_string(belief.latent_dim()));
    }
    if (!f.allFinite()) throw std::invalid_argument("update: non-finite observation");
    const double innovation_var = belief.Sigma(0, 0) + hp.sigma2();
    if (!(innovation_var > 0.0) || !std::isfinite(innovation_var)) {
        throw std::runtime_error("update: innovation variance not positive");
    }
    const Eigen::Vector2d gain = belief.Sigma.col(0) / innovation_var;
    Belief out;
    out.last_state = belief.last_state;
    out.mu = belief.mu;
    for (Eigen::Index j = 0; j < out.mu.cols(); ++j) {
        out.mu.col(j) += gain * (f(j) - belief.mu(0, j));
    }
    out.Sigma = belief.Sigma - gain * belief.Sigma.row(0);
    out.Sigma = 0.5 * (out.Sigma + out.Sigma.transpose()).eval();
    return out;
}

Belief step(const Belief& belief, const Eigen::Ref<const Vector>& state, const Eigen::Ref<const Vector>& f,
            const GpHyperparams& hp, StationaryForm form) {
    double delta = 0.0;
    if (belief.last_state) {
        if (belief.last_state->size() != state.size()) throw std::invalid_argument("step: state dimension changed");
        delta = std::max((state - *belief.last_state).norm(), 0.0);
    }
    Belief next = update(predict(belief, evolution(hp, delta, form)), f, hp);
    next.last_state = state;
    return next;
}

Matrix filter_chain(const Vector& increments, const Matrix& F, const GpHyperparams& hp, StationaryForm form) {
    if (increments.size() < 1 || increments.size() != F.rows()) {
        throw std::invalid_argument("filter_chain: need N >= 1 aligned increments and latent rows");
    }
    Belief b = initial_belief(hp, F.cols(), form);
    Matrix out(F.rows(), F.cols());
    for (Eigen::Index i = 0; i < F.rows(); ++i) {
        const double delta = i == 0 ? 0.0 : std::max(increments(i), 0.0);
        b = update(predict(b, evolution(hp, delta, form)), F.row(i).transpose(), hp);
        out.row(i) = b.observed_mean().transpose();
    }
    return out;
}

Matrix filter_trajectory(const Matrix& states, const Matrix& F, const GpHyperparams& hp, StationaryForm form) {
    if (states.rows() < 1 || states.rows() != F.rows()) {
        throw std::invalid_argument("filter_trajectory: need N >= 1 aligned states and latent rows");
    }
    Belief b = initial_belief(hp, F.cols(), form);
    Matrix out(F.rows(), F.cols());
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
        b = step(b, states.row(i).transpose(), F.row(i).transpose(), hp, form);
        out.row(i) = b.observed_mean().transpose();
    }
    return out;
}

}  // namespace hlps::gp
