#include "hlps/gp_core.hpp"

#include "hlps/kernels.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace hlps::gp {

namespace {
constexpr double kSqrt3 = 1.7320508075688772;
}

GpHyperparams GpHyperparams::from_natural(double gamma2, double ell, double sigma2) {
    if (!(gamma2 > 0.0) || !(ell > 0.0) || !(sigma2 > 0.0)) {
        throw std::invalid_argument("GpHyperparams: natural values must be strictly positive");
    }
    return {std::log(gamma2), std::log(ell), std::log(sigma2)};
}

double GpHyperparams::gamma2() const { return std::exp(log_gamma2); }
double GpHyperparams::ell() const { return std::max(std::exp(log_ell), kMinLengthScale); }
double GpHyperparams::sigma2() const { return std::exp(log_sigma2); }

void GpHyperparams::validate() const {
    const double g = gamma2(), l = std::exp(log_ell), s = sigma2();
    if (!std::isfinite(g) || !(g > 0.0)) throw std::invalid_argument("GpHyperparams: gamma2 not finite/positive");
    if (!std::isfinite(l) || !(l > 0.0)) throw std::invalid_argument("GpHyperparams: ell not finite/positive");
    if (!std::isfinite(s) || !(s > 0.0)) throw std::invalid_argument("GpHyperparams: sigma2 not finite/positive");
}

void SupportWindow::validate() const {
    if (states.rows() < 1) throw std::invalid_argument("SupportWindow: empty");
    if (states.rows() != F.rows()) {
        throw std::invalid_argument("SupportWindow: " + std::to_string(states.rows()) + " states but " +
                                    std::to_string(F.rows()) + " latent rows");
    }
    if (!states.allFinite()) throw std::invalid_argument("SupportWindow: non-finite state");
    if (!F.allFinite()) throw std::invalid_argument("SupportWindow: non-finite latent row");
}

double matern32_from_distance(double distance, double gamma2, double ell) {
    const double r = kSqrt3 * distance / ell;
    return gamma2 * (1.0 + r) * std::exp(-r);
}

double matern32(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, const GpHyperparams& hp) {
    if (a.size() != b.size()) throw std::invalid_argument("matern32: states differ in dimension");
    if (!a.allFinite() || !b.allFinite()) throw std::invalid_argument("matern32: non-finite state component");
    return matern32_from_distance((a - b).norm(), hp.gamma2(), hp.ell());
}

Matrix distance_matrix(const Matrix& states) {
    if (!states.allFinite()) throw std::invalid_argument("distance_matrix: non-finite state component");
    return kernels::omp::pairwise_distances(states);
}

Matrix chain_distance_matrix(const Vector& increments) {
    const Eigen::Index n = increments.size();
    Vector x(n);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i > 0) acc += std::max(increments(i), 0.0);
        x(i) = acc;
    }
    Matrix d(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) d(i, j) = std::abs(x(i) - x(j));
    return d;
}

Matrix covariance_matrix(const Matrix& states, const GpHyperparams& hp) {
    if (states.rows() < 1) throw std::invalid_argument("covariance_matrix: no states");
    if (!states.allFinite()) throw std::invalid_argument("covariance_matrix: non-finite state component");
    return kernels::omp::matern32_covariance(states, hp.gamma2(), hp.ell());
}

Matrix covariance_from_distances(const Matrix& distances, const GpHyperparams& hp) {
    const double g = hp.gamma2(), l = hp.ell();
    return distances.unaryExpr([g, l](double d) { return matern32_from_distance(d, g, l); });
}

BatchPosterior batch_posterior_from_distances(const Matrix& distances, const Matrix& F, const GpHyperparams& hp) {
    hp.validate();
    if (distances.rows() != F.rows()) throw std::invalid_argument("batch_posterior: window/latent size mismatch");
    const Matrix c = covariance_from_distances(distances, hp);
    Matrix a = c;
    a.diagonal().array() += hp.sigma2();
    const auto llt = ad::robust_cholesky(a);
    BatchPosterior out;
    out.mean = c * llt.solve(F);
    const Matrix ainv_c = llt.solve(c);
    Vector v = c.diagonal() - (c.cwiseProduct(ainv_c.transpose())).rowwise().sum();
    v = v.cwiseMax(0.0).cwiseMin(hp.gamma2());
    out.var = v.replicate(1, F.cols());
    return out;
}

BatchPosterior batch_posterior(const SupportWindow& window, const GpHyperparams& hp) {
    window.validate();
    return batch_posterior_from_distances(distance_matrix(window.states), window.F, hp);
}

// ---- differentiable route ------------------------------------------------

HyperVars split_hyperparams(const Var& packed) {
    if (packed.rows() != 1 || packed.cols() != 3) throw ad::ShapeError("split_hyperparams: expected 1x3");
    return {ad::cols(packed, 0, 1), ad::cols(packed, 1, 1), ad::cols(packed, 2, 1)};
}

HyperVars constant_hyperparams(ad::Tape& tape, const GpHyperparams& hp) {
    return {tape.constant(hp.log_gamma2), tape.constant(hp.log_ell), tape.constant(hp.log_sigma2)};
}

Var covariance_var(const Matrix& distances, const HyperVars& hv) {
    ad::Tape& tape = *hv.log_gamma2.tape();
    const double gamma2 = std::exp(hv.log_gamma2.scalar());
    const double raw_ell = std::exp(hv.log_ell.scalar());
    const bool floored = raw_ell < kMinLengthScale;
    const double ell = floored ? kMinLengthScale : raw_ell;
    // r = sqrt(3) D / ell
    auto r = std::make_shared<Matrix>((kSqrt3 / ell) * distances);
    Matrix c = (gamma2 * (1.0 + r->array()) * (-r->array()).exp()).matrix();
    const int ig = hv.log_gamma2.id(), il = hv.log_ell.id();
    return tape.push(std::move(c), {ig, il}, [ig, il, r, gamma2, floored](ad::Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        // dC/dlog_gamma2 = C ; dC/dlog_ell = gamma2 r^2 exp(-r)
        t.accumulate(ig, Matrix::Constant(1, 1, g.cwiseProduct(t.value(self)).sum()));
        if (!floored) {
            const double d_ell = (g.array() * gamma2 * r->array().square() * (-r->array()).exp()).sum();
            t.accumulate(il, Matrix::Constant(1, 1, d_ell));
        }
    });
}

Var posterior_mean_var(const Matrix& distances, const Var& F, const HyperVars& hv) {
    if (distances.rows() != F.rows()) throw ad::ShapeError("posterior_mean_var: window/latent size mismatch");
    const Var c = covariance_var(distances, hv);
    const Var a = ad::add_diag(c, ad::exp(hv.log_sigma2));
    return ad::matmul(c, ad::cholesky_solve(a, F));
}

Var posterior_variance_var(const Matrix& distances, const HyperVars& hv) {
    const Var c = covariance_var(distances, hv);
    const Var a = ad::add_diag(c, ad::exp(hv.log_sigma2));
    const Var y = ad::cholesky_solve(a, c);
    const Var quad = ad::row_sum(ad::mul(c, ad::transpose(y)));
    ad::Tape& tape = *c.tape();
    const Var prior = ad::scale_by(ad::exp(hv.log_gamma2), tape.constant(Matrix::Ones(distances.rows(), 1)));
    return ad::sub(prior, quad);
}

}  // namespace hlps::gp
