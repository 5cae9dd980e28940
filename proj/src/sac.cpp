#include "hlps/sac.hpp"

#include <cmath>
#include <stdexcept>

namespace hlps::rl {

namespace {

constexpr double kLog2 = 0.69314718055994530942;
constexpr double kHalfLog2Pi = 0.91893853320467274178;

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

void check_finite(const ad::Var& v, const char* what) {
    if (!std::isfinite(v.scalar())) throw ad::NonFiniteValue(std::string("non-finite ") + what);
}

}  // namespace

void Batch::validate(int obs_dim, int act_dim) const {
    const Eigen::Index n = obs.rows();
    if (n == 0) throw std::invalid_argument("Batch: empty");
    if (obs.cols() != obs_dim || next_obs.cols() != obs_dim || next_obs.rows() != n)
        throw std::invalid_argument("Batch: observation shape mismatch");
    if (act.cols() != act_dim || act.rows() != n) throw std::invalid_argument("Batch: action shape mismatch");
    if (rew.rows() != n || rew.cols() != 1 || done.rows() != n || done.cols() != 1)
        throw std::invalid_argument("Batch: reward/done shape mismatch");
}

SacAgent::SacAgent(const std::string& name, int obs_dim, int act_dim, Vector action_scale, const SacConfig& cfg,
                   Rng& rng)
    : name_(name), obs_dim_(obs_dim), act_dim_(act_dim), cfg_(cfg) {
    if (obs_dim < 1 || act_dim < 1 || cfg.hidden < 1) throw std::invalid_argument("SacAgent: bad dimensions");
    set_action_scale(action_scale);
    actor_ = nn::Mlp(name + ".actor", {obs_dim, cfg.hidden, cfg.hidden, 2 * act_dim}, rng);
    q1_ = nn::Mlp(name + ".q1", {obs_dim + act_dim, cfg.hidden, cfg.hidden, 1}, rng);
    q2_ = nn::Mlp(name + ".q2", {obs_dim + act_dim, cfg.hidden, cfg.hidden, 1}, rng);
    q1t_ = nn::Mlp(name + ".q1_target", {obs_dim + act_dim, cfg.hidden, cfg.hidden, 1}, rng);
    q2t_ = nn::Mlp(name + ".q2_target", {obs_dim + act_dim, cfg.hidden, cfg.hidden, 1}, rng);
    q1t_.soft_update_from(q1_, 1.0);
    q2t_.soft_update_from(q2_, 1.0);
    if (!(cfg.init_alpha > 0.0)) throw std::invalid_argument("SacAgent: init_alpha must be positive");
    log_alpha_ = ad::Parameter(name + ".log_alpha", Matrix::Constant(1, 1, std::log(cfg.init_alpha)));
}

void SacAgent::set_action_scale(const Vector& scale) { set_action_box(Vector::Zero(act_dim_), scale); }

void SacAgent::set_action_box(const Vector& center, const Vector& scale) {
    if (scale.size() != act_dim_ || !(scale.array() > 0.0).all() || !scale.allFinite())
        throw std::invalid_argument("SacAgent: action scale must be positive with one entry per action dimension");
    if (center.size() != act_dim_ || !center.allFinite())
        throw std::invalid_argument("SacAgent: action center must be finite with one entry per action dimension");
    center_ = center;
    scale_ = scale;
}

double SacAgent::alpha() const { return std::exp(log_alpha_.value(0, 0)); }

std::vector<ad::Parameter*> SacAgent::critic_parameters() {
    auto out = q1_.parameters();
    for (auto* p : q2_.parameters()) out.push_back(p);
    return out;
}

std::vector<ad::Parameter*> SacAgent::all_parameters() {
    std::vector<ad::Parameter*> out;
    for (nn::Mlp* m : {&actor_, &q1_, &q2_, &q1t_, &q2t_})
        for (auto* p : m->parameters()) out.push_back(p);
    out.push_back(&log_alpha_);
    return out;
}

void SacAgent::split_head(const Matrix& out, Matrix& mu, Matrix& log_std) const {
    mu = out.leftCols(act_dim_);
    const double lo = cfg_.log_std_min, hi = cfg_.log_std_max;
    log_std = (lo + (hi - lo) * (out.rightCols(act_dim_).array().tanh() + 1.0) * 0.5).matrix();
}

PolicySample SacAgent::sample(const Matrix& obs, const Matrix& noise) const {
    if (noise.rows() != obs.rows() || noise.cols() != act_dim_) throw std::invalid_argument("sample: noise shape");
    Matrix mu, log_std;
    split_head(actor_.forward_value(obs), mu, log_std);
    const Matrix u = mu.array() + log_std.array().exp() * noise.array();
    PolicySample out;
    out.action.resize(obs.rows(), act_dim_);
    out.logp = Vector::Zero(obs.rows());
    for (Eigen::Index i = 0; i < obs.rows(); ++i) {
        double lp = 0.0;
        for (int j = 0; j < act_dim_; ++j) {
            const double uj = u(i, j);
            out.action(i, j) = center_(j) + scale_(j) * std::tanh(uj);
            lp += -0.5 * noise(i, j) * noise(i, j) - log_std(i, j) - kHalfLog2Pi;
            lp -= 2.0 * (kLog2 - uj - softplus(-2.0 * uj));
        }
        out.logp(i) = lp;
    }
    return out;
}

Vector SacAgent::act(const Vector& obs, bool deterministic, Rng& rng) const {
    if (obs.size() != obs_dim_) throw std::invalid_argument("act: observation dimension mismatch");
    const Matrix row = obs.transpose();
    if (deterministic) {
        Matrix mu, log_std;
        split_head(actor_.forward_value(row), mu, log_std);
        return center_ + (mu.row(0).transpose().array().tanh() * scale_.array()).matrix();
    }
    const Matrix noise = rng.normal_matrix(1, act_dim_);
    return sample(row, noise).action.row(0).transpose();
}

double SacAgent::log_prob(const Vector& obs, const Vector& action) const {
    Matrix mu, log_std;
    split_head(actor_.forward_value(obs.transpose()), mu, log_std);
    double lp = 0.0;
    for (int j = 0; j < act_dim_; ++j) {
        const double y = (action(j) - center_(j)) / scale_(j);
        if (!(std::abs(y) < 1.0)) return -std::numeric_limits<double>::infinity();
        const double u = std::atanh(y);
        const double xi = (u - mu(0, j)) / std::exp(log_std(0, j));
        lp += -0.5 * xi * xi - log_std(0, j) - kHalfLog2Pi;
        lp -= 2.0 * (kLog2 - u - softplus(-2.0 * u));
    }
    return lp;
}

Matrix SacAgent::q_values(const Matrix& obs, const Matrix& act) const {
    Matrix x(obs.rows(), obs.cols() + act.cols());
    x << obs, act;
    Matrix out(obs.rows(), 2);
    out.col(0) = q1_.forward_value(x);
    out.col(1) = q2_.forward_value(x);
    return out;
}

Matrix SacAgent::critic_targets(const Batch& batch, const Matrix& next_noise) const {
    batch.validate(obs_dim_, act_dim_);
    const PolicySample next = sample(batch.next_obs, next_noise);
    Matrix x(batch.size(), obs_dim_ + act_dim_);
    x << batch.next_obs, next.action;
    const Matrix qmin = q1t_.forward_value(x).cwiseMin(q2t_.forward_value(x));
    const double a = alpha();
    Matrix y(batch.size(), 1);
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
        const double bootstrap = qmin(i, 0) - a * next.logp(i);
        y(i, 0) = cfg_.reward_scale * batch.rew(i, 0) + cfg_.gamma * (1.0 - batch.done(i, 0)) * bootstrap;
    }
    return y;
}

ad::Var SacAgent::critic_loss(ad::Tape& tape, const Batch& batch, const Matrix& next_noise) {
    const ad::Var y = tape.constant(critic_targets(batch, next_noise));
    Matrix xin(batch.size(), obs_dim_ + act_dim_);
    xin << batch.obs, batch.act;
    const ad::Var x = tape.constant(std::move(xin));
    const ad::Var d1 = ad::sub(q1_.forward(tape, x), y);
    const ad::Var d2 = ad::sub(q2_.forward(tape, x), y);
    return ad::add(ad::mean(ad::square(d1)), ad::mean(ad::square(d2)));
}

ad::Var SacAgent::actor_loss(ad::Tape& tape, const Batch& batch, const Matrix& noise, Vector* logp_out) {
    batch.validate(obs_dim_, act_dim_);
    if (noise.rows() != batch.size() || noise.cols() != act_dim_) throw std::invalid_argument("actor_loss: noise shape");
    const Eigen::Index n = batch.size();
    const ad::Var obs = tape.constant(batch.obs);
    const ad::Var out = actor_.forward(tape, obs);
    const ad::Var mu = ad::cols(out, 0, act_dim_);
    const ad::Var log_std = ad::tanh_range(ad::cols(out, act_dim_, act_dim_), cfg_.log_std_min, cfg_.log_std_max);
    const ad::Var u = ad::add(mu, ad::mul(ad::exp(log_std), tape.constant(noise)));
    const Matrix scale_rows = scale_.transpose().replicate(n, 1);
    const ad::Var action = ad::add(ad::mul(ad::tanh(u), tape.constant(scale_rows)),
                                   tape.constant(center_.transpose().replicate(n, 1)));

    // log N(xi) - log std - log(1 - tanh(u)^2), with
    // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
    Matrix c = -0.5 * noise.array().square() - kHalfLog2Pi - 2.0 * kLog2;
    const ad::Var per_dim =
        ad::add(tape.constant(std::move(c)),
                ad::sub(ad::add(ad::scale(u, 2.0), ad::scale(ad::softplus(ad::scale(u, -2.0)), 2.0)), log_std));
    const ad::Var logp = ad::row_sum(per_dim);
    if (logp_out) *logp_out = logp.value().col(0);

    const ad::Var x = ad::concat_cols(obs, action);
    const ad::Var qmin = ad::minimum(q1_.forward(tape, x, false), q2_.forward(tape, x, false));
    const ad::Var loss = ad::mean(ad::sub(ad::scale(logp, alpha()), qmin));
    return loss;
}

ad::Var SacAgent::alpha_loss(ad::Tape& tape, const Vector& logp) {
    const ad::Var la = tape.param(log_alpha_);
    const double m = (logp.array() + target_entropy()).mean();
    return ad::scale(la, -m);
}

SacStats SacAgent::update(const Batch& batch, Rng& rng) {
    batch.validate(obs_dim_, act_dim_);
    SacStats stats;
    const Matrix next_noise = rng.normal_matrix(batch.size(), act_dim_);
    {
        ad::Tape tape;
        const ad::Var loss = critic_loss(tape, batch, next_noise);
        check_finite(loss, "critic loss");
        tape.backward(loss);
        const auto params = critic_parameters();
        ad::adam_step(params, cfg_.lr);
        stats.critic_loss = loss.scalar();
    }
    const Matrix noise = rng.normal_matrix(batch.size(), act_dim_);
    Vector logp;
    {
        ad::Tape tape;
        const ad::Var loss = actor_loss(tape, batch, noise, &logp);
        check_finite(loss, "actor loss");
        tape.backward(loss);
        const auto params = actor_parameters();
        ad::adam_step(params, cfg_.lr);
        stats.actor_loss = loss.scalar();
    }
    if (cfg_.learn_alpha) {
        ad::Tape tape;
        const ad::Var loss = alpha_loss(tape, logp);
        check_finite(loss, "temperature loss");
        tape.backward(loss);
        ad::Parameter* p = &log_alpha_;
        ad::adam_step(std::span<ad::Parameter* const>(&p, 1), cfg_.lr);
    }
    q1t_.soft_update_from(q1_, cfg_.tau);
    q2t_.soft_update_from(q2_, cfg_.tau);
    stats.alpha = alpha();
    return stats;
}

}  // namespace hlps::rl
