#pragma once

// Two-level training loop. Every environment step: act, advance the online
// representation, store the transition, then one low-level SAC update and
// one encoder update. Every k steps: one high-level SAC update. Every m
// steps: one GP hyperparameter update over T-segment windows.

#include "hlps/checkpoint.hpp"
#include "hlps/config.hpp"
#include "hlps/gp_statespace.hpp"
#include "hlps/maze.hpp"
#include "hlps/objective.hpp"
#include "hlps/replay_buffer.hpp"
#include "hlps/representation.hpp"
#include "hlps/rng.hpp"
#include "hlps/sac.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hlps::train {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// High-level action box, refreshed at each evaluation. Symmetric:
// [-L, L]^d with L = max(latent_bound_min, 2 max|z|) over all visited z.
// Observed: the per-dimension range of z visited since the previous
// refresh, widened by 10% on each side (half-width at least 1).
enum class SubgoalBox { Observed, Symmetric };

SubgoalBox parse_subgoal_box(const std::string& name);
std::string to_string(SubgoalBox b);

struct TrainConfig {
    std::uint64_t seed = 0;
    int k = 50;
    int m = 100;
    int T = 3;
    long total_steps = 300000;
    long eval_every = 25000;
    int eval_episodes = 10;
    long warmup = 2000;
    std::size_t sac_batch = 128;
    std::size_t triplet_batch = 64;
    std::size_t window_batch = 32;
    std::size_t buffer_capacity = 1000000;
    double encoder_lr = 1e-4;
    double hyper_lr = 1e-5;
    double latent_bound_min = 10.0;
    SubgoalBox subgoal_box = SubgoalBox::Observed;
    long checkpoint_every = 0;  // 0: final checkpoint only

    rl::SacConfig sac;
    rep::RepresentationConfig rep{.input_dims = env::kAgentStateDim};
    obj::ObjectiveConfig objective;
    env::MazeConfig env;
    env::Vec2 eval_start{2.0, 2.0};
    env::Vec2 eval_goal{2.0, 10.0};

    void validate() const;
    env::MazeConfig eval_env() const;

    static TrainConfig from_config(const cfg::Config& c);
    /// Every field materialized, suitable for a manifest.
    cfg::Config to_config() const;
};

struct MetricsRow {
    long step = 0;
    double success_rate = 0.0;
    double mean_return = 0.0;
    double rep_loss = 0.0;
    double gamma2 = 0.0;
    double ell = 0.0;
    double sigma2 = 0.0;
};

std::string metrics_header();
std::string format_metrics(const MetricsRow& row);

struct Counters {
    long low_updates = 0;
    long high_updates = 0;
    long encoder_updates = 0;
    long hyper_updates = 0;
};

/// One rollout step as recorded by evaluate().
struct RolloutRow {
    int episode = 0;
    int step = 0;
    Vector s;
    Vector z;
    Vector g;
    double reward = 0.0;
    bool success = false;
};

struct EvalResult {
    double success_rate = 0.0;
    double mean_return = 0.0;
    std::vector<int> episode_lengths;
    std::vector<bool> successes;
};

class Trainer {
public:
    Trainer(TrainConfig cfg, std::uint64_t seed);

    /// Advance by n environment steps. on_eval receives each evaluation row.
    void run(long n, const std::function<void(const MetricsRow&)>& on_eval = {});

    /// Deterministic-policy rollouts on the evaluation environment (fixed
    /// start and goal). Each episode draws from its own stream keyed by
    /// (round, episode), so the result does not depend on thread count.
    EvalResult evaluate(int episodes, long round, std::vector<RolloutRow>* rows = nullptr,
                        bool parallel = true) const;

    /// Copy the representation (encoder, GP hyperparameters, normalizer) and
    /// the low-level agent from a source; everything else stays fresh.
    void transfer_from(const Trainer& source);

    ckpt::Archive save() const;
    /// Rebuilds a trainer from a checkpoint, including its configuration.
    static Trainer load(const ckpt::Archive& archive);

    long step() const { return step_; }
    const Counters& counters() const { return counters_; }
    const TrainConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<MetricsRow>& metrics() const { return metrics_; }
    /// Current high-level action box.
    const Vector& subgoal_center() const { return high_.action_center(); }
    const Vector& subgoal_half_width() const { return high_.action_scale(); }

    rep::RepresentationModel& representation() { return rep_; }
    const rep::RepresentationModel& representation() const { return rep_; }
    rl::SacAgent& low() { return low_; }
    rl::SacAgent& high() { return high_; }
    const rl::SacAgent& low() const { return low_; }
    const rl::SacAgent& high() const { return high_; }
    const rl::ReplayBuffer& buffer() const { return buffer_; }
    const env::PointMaze& env() const { return env_; }

    /// Scripted override for tests: when set, replaces the low-level policy
    /// during evaluation.
    std::function<env::Vec2(const env::EnvState&)> eval_policy_override;

private:
    void start_episode();
    Vector choose_subgoal(const Vector& obs, Rng& rng, bool deterministic) const;
    void train_step();
    rl::Batch low_batch();
    std::optional<rl::Batch> high_batch();
    void refresh_latent_bound();
    void track_latent(const Vector& z);
    Vector low_obs(const Vector& s, const Vector& g) const;

    TrainConfig cfg_;
    std::uint64_t seed_;
    env::PointMaze env_;
    rep::RepresentationModel rep_;
    rl::SacAgent low_;
    rl::SacAgent high_;
    rl::ReplayBuffer buffer_;

    Rng env_rng_, act_rng_, sample_rng_, low_rng_, high_rng_, rep_rng_;

    // episode state
    bool in_episode_ = false;
    env::EnvState state_;
    gp::Belief belief_;
    Vector obs_, g_;
    long episode_ = 0;
    long ep_step_ = 0;

    long step_ = 0;
    Counters counters_;
    double last_rep_loss_ = 0.0;
    double latent_max_ = 0.0;
    // per-dimension extent of z since the last refresh
    Vector window_lo_, window_hi_;
    bool window_seen_ = false;
    std::vector<MetricsRow> metrics_;
};

/// Rollout rows as JSON lines: {"episode","step","s","z","g","reward","success"}.
std::string rollout_jsonl(const std::vector<RolloutRow>& rows);
/// z1 vs z2 scatter coloured by time, stars where the subgoal changes.
std::string rollout_svg(const std::vector<RolloutRow>& rows);

}  // namespace hlps::train
