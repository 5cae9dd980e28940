#pragma once

// Soft actor-critic with a tanh-squashed Gaussian policy, twin critics with
// target copies, and a learned entropy temperature.

#include "hlps/autodiff.hpp"
#include "hlps/nn.hpp"
#include "hlps/rng.hpp"

#include <string>
#include <vector>

namespace hlps::rl {

using ad::Matrix;
using ad::Vector;

struct SacConfig {
    int hidden = 256;
    double gamma = 0.99;
    double tau = 0.005;
    double lr = 2e-4;
    double reward_scale = 0.1;
    double init_alpha = 0.2;
    bool learn_alpha = true;
    double log_std_min = -5.0;
    double log_std_max = 2.0;
};

/// Rows are samples. rew and done are N x 1.
struct Batch {
    Matrix obs;
    Matrix act;
    Matrix rew;
    Matrix next_obs;
    Matrix done;

    Eigen::Index size() const { return obs.rows(); }
    void validate(int obs_dim, int act_dim) const;
};

struct SacStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha = 0.0;
};

struct PolicySample {
    Matrix action;  // N x A
    Vector logp;    // N
};

class SacAgent {
public:
    SacAgent() = default;
    SacAgent(const std::string& name, int obs_dim, int act_dim, Vector action_scale, const SacConfig& cfg, Rng& rng);

    int obs_dim() const { return obs_dim_; }
    int act_dim() const { return act_dim_; }
    const SacConfig& config() const { return cfg_; }

    /// Stochastic: center + scale * tanh(mu + std * xi); deterministic:
    /// center + scale * tanh(mu). Log-densities below are of the unit action
    /// tanh(.), so the entropy target does not depend on the box.
    Vector act(const Vector& obs, bool deterministic, Rng& rng) const;
    /// Squashed samples and their log-densities for given standard-normal noise.
    PolicySample sample(const Matrix& obs, const Matrix& noise) const;
    /// Log-density (unit action) of an action strictly inside the box.
    double log_prob(const Vector& obs, const Vector& action) const;

    /// r * reward_scale + gamma * (1 - done) * (min target Q - alpha log pi)
    /// at next_obs, using the given noise for the next-action samples.
    Matrix critic_targets(const Batch& batch, const Matrix& next_noise) const;
    /// Sum of both critics' mean squared errors against critic_targets.
    ad::Var critic_loss(ad::Tape& tape, const Batch& batch, const Matrix& next_noise);
    /// mean(alpha log pi - min Q); critics enter as constants. logp receives
    /// the per-sample log-densities.
    ad::Var actor_loss(ad::Tape& tape, const Batch& batch, const Matrix& noise, Vector* logp = nullptr);
    /// -mean(log_alpha * (logp + target_entropy)).
    ad::Var alpha_loss(ad::Tape& tape, const Vector& logp);

    /// Critic step, actor step, temperature step, then target smoothing.
    SacStats update(const Batch& batch, Rng& rng);

    double alpha() const;
    double target_entropy() const { return -static_cast<double>(act_dim_); }
    const Vector& action_scale() const { return scale_; }
    const Vector& action_center() const { return center_; }
    /// Box centered at zero.
    void set_action_scale(const Vector& scale);
    void set_action_box(const Vector& center, const Vector& scale);

    Matrix q_values(const Matrix& obs, const Matrix& act) const;  // N x 2

    nn::Mlp& actor() { return actor_; }
    nn::Mlp& critic(int i) { return i == 0 ? q1_ : q2_; }
    nn::Mlp& target(int i) { return i == 0 ? q1t_ : q2t_; }
    const nn::Mlp& actor() const { return actor_; }
    const nn::Mlp& critic(int i) const { return i == 0 ? q1_ : q2_; }
    const nn::Mlp& target(int i) const { return i == 0 ? q1t_ : q2t_; }
    ad::Parameter& log_alpha() { return log_alpha_; }
    const ad::Parameter& log_alpha() const { return log_alpha_; }

    std::vector<ad::Parameter*> critic_parameters();
    std::vector<ad::Parameter*> actor_parameters() { return actor_.parameters(); }
    /// Every tensor that defines the agent, targets included.
    std::vector<ad::Parameter*> all_parameters();

private:
    void split_head(const Matrix& out, Matrix& mu, Matrix& log_std) const;

    std::string name_;
    int obs_dim_ = 0;
    int act_dim_ = 0;
    Vector center_;
    Vector scale_;
    SacConfig cfg_;
    nn::Mlp actor_, q1_, q2_, q1t_, q2t_;
    ad::Parameter log_alpha_;
};

}  // namespace hlps::rl
