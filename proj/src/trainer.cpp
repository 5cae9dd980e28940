#include "hlps/trainer.hpp"

#include "hlps/rewards.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace hlps::train {

namespace {

const std::vector<std::string> kKnownKeys = {
    "train.seed", "train.k", "train.m", "train.T", "train.total_steps", "train.eval_every", "train.eval_episodes",
    "train.warmup", "train.sac_batch", "train.triplet_batch", "train.window_batch", "train.buffer_capacity",
    "train.encoder_lr", "train.hyper_lr", "train.latent_bound_min", "train.subgoal_box", "train.checkpoint_every",
    "sac.hidden", "sac.gamma", "sac.tau", "sac.lr", "sac.reward_scale", "sac.init_alpha", "sac.learn_alpha",
    "sac.log_std_min", "sac.log_std_max",
    "representation.variant", "representation.input", "representation.latent_dim", "representation.hidden", "representation.gamma2",
    "representation.ell", "representation.sigma2",
    "objective.loss", "objective.ratio_gradient", "objective.eps", "objective.margin",
    "env.layout", "env.layout_file", "env.noise_sigma", "env.reward", "env.success_radius", "env.horizon",
    "env.goal_sampling", "env.goal", "env.v_max",
    "eval.start", "eval.goal",
    // written by run manifests, ignored here
    "run.artifact_version", "run.transfer_from", "run.layout"};

env::Vec2 to_vec2(const Eigen::VectorXd& v, const std::string& key) {
    if (v.size() != 2) throw cfg::ConfigError(key + ": expected a pair [x, y]");
    return {v(0), v(1)};
}

std::string vec_text(const env::Vec2& v) {
    return "[" + cfg::format_double(v.x()) + ", " + cfg::format_double(v.y()) + "]";
}

Eigen::VectorXd from_vec2(const env::Vec2& v) { return Eigen::Vector2d(v); }

std::size_t positive_size(long v, const std::string& key) {
    if (v < 1) throw cfg::ConfigError(key + " must be >= 1");
    return static_cast<std::size_t>(v);
}

Matrix column(const Vector& v) { return v; }

void put_u64(ckpt::Archive& a, const std::string& name, std::uint64_t v) {
    Matrix m(2, 1);
    m << static_cast<double>(v >> 32), static_cast<double>(v & 0xffffffffULL);
    a.put(name, m);
}

std::uint64_t get_u64(const ckpt::Archive& a, const std::string& name) {
    const Matrix& m = a.get(name, 2, 1);
    return (static_cast<std::uint64_t>(m(0, 0)) << 32) | static_cast<std::uint64_t>(m(1, 0));
}

void put_rng(ckpt::Archive& a, const std::string& name, const Rng& rng) {
    const auto halves = rng.save_state();
    a.put(name, Eigen::Map<const Eigen::VectorXd>(halves.data(), static_cast<Eigen::Index>(halves.size())));
}

void get_rng(const ckpt::Archive& a, const std::string& name, Rng& rng) {
    const Matrix& m = a.get(name);
    rng.load_state(std::vector<double>(m.data(), m.data() + m.size()));
}

void put_param(ckpt::Archive& a, const ad::Parameter& p) {
    a.put("param/" + p.name + "/value", p.value);
    a.put("param/" + p.name + "/m", p.m);
    a.put("param/" + p.name + "/v", p.v);
    a.put_scalar("param/" + p.name + "/step", static_cast<double>(p.step));
}

void get_param(const ckpt::Archive& a, ad::Parameter& p) {
    const auto r = p.value.rows(), c = p.value.cols();
    p.value = a.get("param/" + p.name + "/value", r, c);
    p.m = a.get("param/" + p.name + "/m", r, c);
    p.v = a.get("param/" + p.name + "/v", r, c);
    p.step = static_cast<long>(a.get_scalar("param/" + p.name + "/step"));
    p.zero_grad();
}

std::vector<const ad::Parameter*> params_of(const rep::RepresentationModel& rep) {
    auto out = rep.encoder().parameters();
    out.push_back(&rep.hyper());
    return out;
}

void copy_values(const std::vector<ad::Parameter*>& dst, const std::vector<ad::Parameter*>& src) {
    if (dst.size() != src.size()) throw std::invalid_argument("transfer: architecture mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
        if (dst[i]->value.rows() != src[i]->value.rows() || dst[i]->value.cols() != src[i]->value.cols())
            throw std::invalid_argument("transfer: shape mismatch in " + dst[i]->name);
        dst[i]->value = src[i]->value;
    }
}

}  // namespace

// ---- configuration ---------------------------------------------------------

SubgoalBox parse_subgoal_box(const std::string& name) {
    if (name == "observed") return SubgoalBox::Observed;
    if (name == "symmetric") return SubgoalBox::Symmetric;
    throw std::invalid_argument("unknown subgoal box '" + name + "'");
}

std::string to_string(SubgoalBox b) { return b == SubgoalBox::Observed ? "observed" : "symmetric"; }

void TrainConfig::validate() const {
    if (k < 1 || m < 1 || T < 1) throw std::invalid_argument("train.k, train.m and train.T must be >= 1");
    if (total_steps < 0) throw std::invalid_argument("train.total_steps must be >= 0");
    if (eval_every < k) throw std::invalid_argument("train.eval_every must be >= train.k");
    if (eval_episodes < 1) throw std::invalid_argument("train.eval_episodes must be >= 1");
    if (warmup < 0) throw std::invalid_argument("train.warmup must be >= 0");
    if (sac_batch < 1 || triplet_batch < 1 || window_batch < 1 || buffer_capacity < 1)
        throw std::invalid_argument("batch sizes and buffer capacity must be >= 1");
    if (!(encoder_lr > 0.0) || !(hyper_lr > 0.0) || !(sac.lr > 0.0)) throw std::invalid_argument("learning rates must be > 0");
    if (!(sac.gamma >= 0.0 && sac.gamma < 1.0)) throw std::invalid_argument("sac.gamma must be in [0, 1)");
    if (!(sac.tau > 0.0 && sac.tau <= 1.0)) throw std::invalid_argument("sac.tau must be in (0, 1]");
    if (!(latent_bound_min > 0.0)) throw std::invalid_argument("train.latent_bound_min must be > 0");
    if (rep.latent_dim < 1 || rep.hidden < 1) throw std::invalid_argument("representation sizes must be >= 1");
    rep.init.validate();
    if (!(objective.eps > 0.0)) throw std::invalid_argument("objective.eps must be > 0");
    env.validate();
    eval_env().validate();
}

env::MazeConfig TrainConfig::eval_env() const {
    env::MazeConfig e = env;
    e.goal_sampling = env::GoalSampling::Fixed;
    e.fixed_goal = eval_goal;
    e.fixed_start_enabled = true;
    e.fixed_start = eval_start;
    return e;
}

TrainConfig TrainConfig::from_config(const cfg::Config& c) {
    c.reject_unknown(kKnownKeys);
    TrainConfig t;
    const long seed = c.get_int("train.seed", 0);
    if (seed < 0) throw cfg::ConfigError("train.seed must be >= 0");
    t.seed = static_cast<std::uint64_t>(seed);
    t.k = static_cast<int>(c.get_int("train.k", t.k));
    t.m = static_cast<int>(c.get_int("train.m", t.m));
    t.T = static_cast<int>(c.get_int("train.T", t.T));
    t.total_steps = c.get_int("train.total_steps", t.total_steps);
    t.eval_every = c.get_int("train.eval_every", t.eval_every);
    t.eval_episodes = static_cast<int>(c.get_int("train.eval_episodes", t.eval_episodes));
    t.warmup = c.get_int("train.warmup", t.warmup);
    t.sac_batch = positive_size(c.get_int("train.sac_batch", static_cast<long>(t.sac_batch)), "train.sac_batch");
    t.triplet_batch =
        positive_size(c.get_int("train.triplet_batch", static_cast<long>(t.triplet_batch)), "train.triplet_batch");
    t.window_batch =
        positive_size(c.get_int("train.window_batch", static_cast<long>(t.window_batch)), "train.window_batch");
    t.buffer_capacity =
        positive_size(c.get_int("train.buffer_capacity", static_cast<long>(t.buffer_capacity)), "train.buffer_capacity");
    t.encoder_lr = c.get_double("train.encoder_lr", t.encoder_lr);
    t.hyper_lr = c.get_double("train.hyper_lr", t.hyper_lr);
    t.latent_bound_min = c.get_double("train.latent_bound_min", t.latent_bound_min);
    try {
        t.subgoal_box = parse_subgoal_box(c.get_string("train.subgoal_box", to_string(t.subgoal_box)));
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError(e.what());
    }
    t.checkpoint_every = c.get_int("train.checkpoint_every", t.checkpoint_every);

    t.sac.hidden = static_cast<int>(c.get_int("sac.hidden", t.sac.hidden));
    t.sac.gamma = c.get_double("sac.gamma", t.sac.gamma);
    t.sac.tau = c.get_double("sac.tau", t.sac.tau);
    t.sac.lr = c.get_double("sac.lr", t.sac.lr);
    t.sac.reward_scale = c.get_double("sac.reward_scale", t.sac.reward_scale);
    t.sac.init_alpha = c.get_double("sac.init_alpha", t.sac.init_alpha);
    t.sac.learn_alpha = c.get_bool("sac.learn_alpha", t.sac.learn_alpha);
    t.sac.log_std_min = c.get_double("sac.log_std_min", t.sac.log_std_min);
    t.sac.log_std_max = c.get_double("sac.log_std_max", t.sac.log_std_max);

    try {
        t.rep.variant = rep::parse_variant(c.get_string("representation.variant", rep::to_string(t.rep.variant)));
        t.objective.variant =
            obj::parse_loss_variant(c.get_string("objective.loss", obj::to_string(t.objective.variant)));
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError(e.what());
    }
    const std::string input = c.get_string("representation.input", t.rep.input_dims == 0 ? "observation" : "state");
    if (input == "state") {
        t.rep.input_dims = env::kAgentStateDim;
    } else if (input == "observation") {
        t.rep.input_dims = 0;
    } else {
        throw cfg::ConfigError("representation.input must be 'state' or 'observation', got '" + input + "'");
    }
    t.rep.latent_dim = static_cast<int>(c.get_int("representation.latent_dim", t.rep.latent_dim));
    t.rep.hidden = static_cast<int>(c.get_int("representation.hidden", t.rep.hidden));
    const double g2 = c.get_double("representation.gamma2", t.rep.init.gamma2());
    const double ell = c.get_double("representation.ell", std::exp(t.rep.init.log_ell));
    const double s2 = c.get_double("representation.sigma2", t.rep.init.sigma2());
    try {
        t.rep.init = gp::GpHyperparams::from_natural(g2, ell, s2);
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError(std::string("representation: ") + e.what());
    }

    t.objective.ratio_gradient = c.get_bool("objective.ratio_gradient", t.objective.ratio_gradient);
    t.objective.eps = c.get_double("objective.eps", t.objective.eps);
    t.objective.margin = c.get_double("objective.margin", t.objective.margin);

    t.env.layout = c.get_string("env.layout", t.env.layout);
    t.env.layout_file = c.get_string("env.layout_file", t.env.layout_file);
    t.env.noise_sigma = c.get_double("env.noise_sigma", t.env.noise_sigma);
    const std::string reward = c.get_string("env.reward", "sparse");
    if (reward == "sparse") t.env.reward_mode = env::RewardMode::Sparse;
    else if (reward == "dense") t.env.reward_mode = env::RewardMode::Dense;
    else throw cfg::ConfigError("env.reward must be dense or sparse");
    t.env.success_radius = c.get_double("env.success_radius", t.env.success_radius);
    t.env.horizon = static_cast<int>(c.get_int("env.horizon", t.env.horizon));
    const std::string gs = c.get_string("env.goal_sampling", "random");
    if (gs == "random") t.env.goal_sampling = env::GoalSampling::Random;
    else if (gs == "fixed") t.env.goal_sampling = env::GoalSampling::Fixed;
    else throw cfg::ConfigError("env.goal_sampling must be random or fixed");
    t.env.fixed_goal = to_vec2(c.get_vector("env.goal", from_vec2(t.env.fixed_goal)), "env.goal");
    t.env.v_max = c.get_double("env.v_max", t.env.v_max);
    t.eval_start = to_vec2(c.get_vector("eval.start", from_vec2(t.eval_start)), "eval.start");
    t.eval_goal = to_vec2(c.get_vector("eval.goal", from_vec2(t.eval_goal)), "eval.goal");
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw cfg::ConfigError(e.what());
    }
    return t;
}

cfg::Config TrainConfig::to_config() const {
    using cfg::format_double;
    cfg::Config c;
    auto i = [&](const std::string& k, long v) { c.set(k, std::to_string(v)); };
    auto d = [&](const std::string& k, double v) { c.set(k, format_double(v)); };
    auto b = [&](const std::string& k, bool v) { c.set(k, v ? "true" : "false"); };
    i("train.seed", static_cast<long>(seed));
    i("train.k", k);
    i("train.m", m);
    i("train.T", T);
    i("train.total_steps", total_steps);
    i("train.eval_every", eval_every);
    i("train.eval_episodes", eval_episodes);
    i("train.warmup", warmup);
    i("train.sac_batch", static_cast<long>(sac_batch));
    i("train.triplet_batch", static_cast<long>(triplet_batch));
    i("train.window_batch", static_cast<long>(window_batch));
    i("train.buffer_capacity", static_cast<long>(buffer_capacity));
    d("train.encoder_lr", encoder_lr);
    d("train.hyper_lr", hyper_lr);
    d("train.latent_bound_min", latent_bound_min);
    c.set("train.subgoal_box", to_string(subgoal_box));
    i("train.checkpoint_every", checkpoint_every);
    i("sac.hidden", sac.hidden);
    d("sac.gamma", sac.gamma);
    d("sac.tau", sac.tau);
    d("sac.lr", sac.lr);
    d("sac.reward_scale", sac.reward_scale);
    d("sac.init_alpha", sac.init_alpha);
    b("sac.learn_alpha", sac.learn_alpha);
    d("sac.log_std_min", sac.log_std_min);
    d("sac.log_std_max", sac.log_std_max);
    c.set("representation.variant", rep::to_string(rep.variant));
    c.set("representation.input", std::string(rep.input_dims == 0 ? "observation" : "state"));
    i("representation.latent_dim", rep.latent_dim);
    i("representation.hidden", rep.hidden);
    d("representation.gamma2", rep.init.gamma2());
    d("representation.ell", std::exp(rep.init.log_ell));
    d("representation.sigma2", rep.init.sigma2());
    c.set("objective.loss", obj::to_string(objective.variant));
    b("objective.ratio_gradient", objective.ratio_gradient);
    d("objective.eps", objective.eps);
    d("objective.margin", objective.margin);
    c.set("env.layout", env.layout);
    if (!env.layout_file.empty()) c.set("env.layout_file", env.layout_file);
    d("env.noise_sigma", env.noise_sigma);
    c.set("env.reward", env.reward_mode == env::RewardMode::Dense ? "dense" : "sparse");
    d("env.success_radius", env.success_radius);
    i("env.horizon", env.horizon);
    c.set("env.goal_sampling", env.goal_sampling == env::GoalSampling::Fixed ? "fixed" : "random");
    c.set("env.goal", vec_text(env.fixed_goal));
    d("env.v_max", env.v_max);
    c.set("eval.start", vec_text(eval_start));
    c.set("eval.goal", vec_text(eval_goal));
    return c;
}

std::string metrics_header() { return "step,success_rate,mean_return,rep_loss,gamma2,ell,sigma2"; }

std::string format_metrics(const MetricsRow& r) {
    using cfg::format_double;
    return std::to_string(r.step) + "," + format_double(r.success_rate) + "," + format_double(r.mean_return) + "," +
           format_double(r.rep_loss) + "," + format_double(r.gamma2) + "," + format_double(r.ell) + "," +
           format_double(r.sigma2);
}

// ---- trainer -----------------------------------------------------------------

namespace {

TrainConfig with_seed(TrainConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::uint64_t seed)
    : cfg_(with_seed(std::move(cfg), seed)),
      seed_(seed),
      env_(cfg_.env),
      buffer_(cfg_.buffer_capacity, env::kObservationDim, cfg_.rep.latent_dim, 2),
      env_rng_(seed, "env"),
      act_rng_(seed, "act"),
      sample_rng_(seed, "sample"),
      low_rng_(seed, "sac_low"),
      high_rng_(seed, "sac_high"),
      rep_rng_(seed, "representation") {
    Rng init(seed, "init");
    const int d = cfg_.rep.latent_dim;
    rep_ = rep::RepresentationModel(env::kObservationDim, cfg_.rep, init);
    low_ = rl::SacAgent("low", env::kObservationDim + d, 2, Vector::Ones(2), cfg_.sac, init);
    high_ = rl::SacAgent("high", env::kObservationDim, d, Vector::Constant(d, cfg_.latent_bound_min), cfg_.sac, init);
}

Vector Trainer::low_obs(const Vector& s, const Vector& g) const {
    Vector o(s.size() + g.size());
    o << s, g;
    return o;
}

Vector Trainer::choose_subgoal(const Vector& obs, Rng& rng, bool deterministic) const {
    return high_.act(obs, deterministic, rng);
}

void Trainer::start_episode() {
    state_ = env_.reset(env_rng_);
    belief_ = rep_.initial_belief();
    obs_ = state_.observation();
    const Vector z = rep_.phi_online(belief_, obs_);
    track_latent(z);
    g_ = choose_subgoal(obs_, act_rng_, false);
    ep_step_ = 0;
    in_episode_ = true;
}

rl::Batch Trainer::low_batch() {
    const auto idx = buffer_.sample_uniform(cfg_.sac_batch, sample_rng_);
    const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
    const int ds = env::kObservationDim, d = cfg_.rep.latent_dim;
    rl::Batch b;
    b.obs.resize(n, ds + d);
    b.next_obs.resize(n, ds + d);
    b.act.resize(n, 2);
    b.rew.resize(n, 1);
    b.done = Matrix::Zero(n, 1);  // segments never terminate the low level
    Matrix pairs(2 * n, ds);
    for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t i = idx[static_cast<size_t>(r)];
        pairs.row(2 * r) = buffer_.state(i).transpose();
        pairs.row(2 * r + 1) = buffer_.next_state(i).transpose();
        b.obs.row(r) << buffer_.state(i).transpose(), buffer_.subgoal(i).transpose();
        b.next_obs.row(r) << buffer_.next_state(i).transpose(), buffer_.subgoal(i).transpose();
        b.act.row(r) = buffer_.action(i).transpose();
    }
    // Relabel with the current representation over the stored (s, s') pair.
    const Matrix F = rep_.encode_rows(pairs);
    const gp::GpHyperparams hp = rep_.hyperparams();
    for (Eigen::Index r = 0; r < n; ++r) {
        Vector z_next;
        if (rep_.uses_gp()) {
            const double dist = (rep_.inputs(pairs.row(2 * r)) - rep_.inputs(pairs.row(2 * r + 1))).norm();
            Matrix D(2, 2);
            D << 0.0, dist, dist, 0.0;
            z_next = gp::batch_posterior_from_distances(D, F.middleRows(2 * r, 2), hp).mean.row(1).transpose();
        } else {
            z_next = F.row(2 * r + 1).transpose();
        }
        b.rew(r, 0) = rl::intrinsic_reward(z_next, buffer_.subgoal(idx[static_cast<size_t>(r)]));
    }
    return b;
}

std::optional<rl::Batch> Trainer::high_batch() {
    const auto segs = buffer_.sample_segments(cfg_.sac_batch, cfg_.k, sample_rng_);
    if (segs.empty()) return std::nullopt;
    const Eigen::Index n = static_cast<Eigen::Index>(segs.size());
    const int ds = env::kObservationDim, d = cfg_.rep.latent_dim;
    rl::Batch b;
    b.obs.resize(n, ds);
    b.next_obs.resize(n, ds);
    b.act.resize(n, d);
    b.rew.resize(n, 1);
    b.done.resize(n, 1);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& s = segs[static_cast<size_t>(r)];
        b.obs.row(r) = buffer_.state(s.start).transpose();
        b.act.row(r) = buffer_.subgoal(s.start).transpose();
        b.rew(r, 0) = buffer_.segment_reward(s);
        b.next_obs.row(r) = buffer_.next_state(s.end).transpose();
        b.done(r, 0) = buffer_.done(s.end) ? 1.0 : 0.0;
    }
    return b;
}

void Trainer::track_latent(const Vector& z) {
    latent_max_ = std::max(latent_max_, z.cwiseAbs().maxCoeff());
    if (!window_seen_) {
        window_lo_ = z;
        window_hi_ = z;
        window_seen_ = true;
    } else {
        window_lo_ = window_lo_.cwiseMin(z);
        window_hi_ = window_hi_.cwiseMax(z);
    }
}

void Trainer::refresh_latent_bound() {
    const int d = cfg_.rep.latent_dim;
    if (cfg_.subgoal_box == SubgoalBox::Symmetric) {
        high_.set_action_scale(Vector::Constant(d, std::max(cfg_.latent_bound_min, 2.0 * latent_max_)));
        return;
    }
    if (!window_seen_) return;
    const Vector center = 0.5 * (window_lo_ + window_hi_);
    const Vector half = (0.6 * (window_hi_ - window_lo_)).cwiseMax(1.0);
    high_.set_action_box(center, half);
    window_seen_ = false;
}

void Trainer::train_step() {
    if (!in_episode_) start_episode();
    Vector a(2);
    if (step_ < cfg_.warmup) {
        a << act_rng_.uniform(-1.0, 1.0), act_rng_.uniform(-1.0, 1.0);
    } else {
        a = low_.act(low_obs(obs_, g_), false, act_rng_);
    }
    const env::StepResult res = env_.step(state_, env::Vec2(a(0), a(1)), env_rng_);
    const Vector obs_next = res.state.observation();
    const Vector z_next = rep_.phi_online(belief_, obs_next);
    track_latent(z_next);
    const bool last = res.done;
    Vector g_next = g_;
    if (!last && (ep_step_ + 1) % cfg_.k == 0) g_next = choose_subgoal(obs_next, act_rng_, false);

    rl::Transition t;
    t.s = obs_;
    t.g = g_;
    t.a = a;
    t.r_env = res.reward;
    t.r_int = rl::intrinsic_reward(z_next, g_);
    t.s_next = obs_next;
    t.g_next = g_next;
    t.done = res.success;
    t.last = last;
    t.episode = episode_;
    t.step = ep_step_;
    buffer_.push(t);
    rep_.normalizer().update(obs_);

    state_ = res.state;
    obs_ = obs_next;
    g_ = g_next;
    ++ep_step_;
    if (last) {
        in_episode_ = false;
        ++episode_;
    }

    if (step_ >= cfg_.warmup) {
        const obj::UpdateConfig ucfg{cfg_.triplet_batch, cfg_.window_batch, cfg_.k, cfg_.T, cfg_.encoder_lr,
                                     cfg_.hyper_lr};
        low_.update(low_batch(), low_rng_);
        ++counters_.low_updates;
        if (auto loss = obj::representation_update(rep_, buffer_, obj::Group::Encoder, ucfg, cfg_.objective, rep_rng_)) {
            ++counters_.encoder_updates;
            last_rep_loss_ = *loss;
        }
        if ((step_ + 1) % cfg_.k == 0) {
            if (auto hb = high_batch()) {
                high_.update(*hb, high_rng_);
                ++counters_.high_updates;
            }
        }
        if ((step_ + 1) % cfg_.m == 0) {
            if (obj::representation_update(rep_, buffer_, obj::Group::Hyper, ucfg, cfg_.objective, rep_rng_))
                ++counters_.hyper_updates;
        }
    }
    ++step_;
}

void Trainer::run(long n, const std::function<void(const MetricsRow&)>& on_eval) {
    if (n < 0) throw std::invalid_argument("run: negative step count");
    for (long i = 0; i < n; ++i) {
        train_step();
        if (step_ % cfg_.eval_every == 0) {
            refresh_latent_bound();
            const EvalResult r = evaluate(cfg_.eval_episodes, step_ / cfg_.eval_every);
            const gp::GpHyperparams hp = rep_.hyperparams();
            MetricsRow row{step_, r.success_rate, r.mean_return, last_rep_loss_, hp.gamma2(), hp.ell(), hp.sigma2()};
            metrics_.push_back(row);
            if (on_eval) on_eval(row);
        }
    }
}

EvalResult Trainer::evaluate(int episodes, long round, std::vector<RolloutRow>* rows, bool parallel) const {
    if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
    const env::MazeConfig ecfg = cfg_.eval_env();
    struct Episode {
        double ret = 0.0;
        bool success = false;
        int length = 0;
        std::vector<RolloutRow> rows;
    };
    std::vector<Episode> out(static_cast<size_t>(episodes));
    const bool record = rows != nullptr;

#pragma omp parallel for schedule(dynamic) if (parallel && episodes > 1)
    for (int e = 0; e < episodes; ++e) {
        Episode& ep = out[static_cast<size_t>(e)];
        Rng rng(seed_, "eval/" + std::to_string(round) + "/" + std::to_string(e));
        env::PointMaze env(ecfg);
        env::EnvState st = env.reset(rng);
        gp::Belief belief = rep_.initial_belief();
        Vector obs = st.observation();
        Vector z = rep_.phi_online(belief, obs);
        Vector g = choose_subgoal(obs, rng, true);
        for (int t = 0;; ++t) {
            env::Vec2 a;
            if (eval_policy_override) {
                a = eval_policy_override(st);
            } else {
                const Vector av = low_.act(low_obs(obs, g), true, rng);
                a = env::Vec2(av(0), av(1));
            }
            const env::StepResult res = env.step(st, a, rng);
            ep.ret += res.reward;
            ep.success = ep.success || res.success;
            ++ep.length;
            if (record) ep.rows.push_back({e, t, obs, z, g, res.reward, res.success});
            if (res.done) break;
            st = res.state;
            obs = st.observation();
            z = rep_.phi_online(belief, obs);
            if ((t + 1) % cfg_.k == 0) g = choose_subgoal(obs, rng, true);
        }
    }

    EvalResult r;
    double successes = 0.0, ret = 0.0;
    for (const auto& ep : out) {
        successes += ep.success ? 1.0 : 0.0;
        ret += ep.ret;
        r.successes.push_back(ep.success);
        r.episode_lengths.push_back(ep.length);
        if (rows) rows->insert(rows->end(), ep.rows.begin(), ep.rows.end());
    }
    r.success_rate = successes / episodes;
    r.mean_return = ret / episodes;
    return r;
}

void Trainer::transfer_from(const Trainer& source) {
    if (source.rep_.state_dim() != rep_.state_dim() || source.rep_.latent_dim() != rep_.latent_dim())
        throw std::invalid_argument("transfer: state or latent dimension mismatch");
    if (source.low_.obs_dim() != low_.obs_dim() || source.low_.act_dim() != low_.act_dim() ||
        source.low_.config().hidden != low_.config().hidden)
        throw std::invalid_argument("transfer: low-level agent shape mismatch");
    if (source.rep_.encoder().sizes() != rep_.encoder().sizes())
        throw std::invalid_argument("transfer: encoder architecture mismatch");
    auto& src = const_cast<Trainer&>(source);
    copy_values(rep_.encoder_parameters(), src.rep_.encoder_parameters());
    rep_.hyper().value = source.rep_.hyper().value;
    rep_.normalizer() = source.rep_.normalizer();
    copy_values(low_.all_parameters(), src.low_.all_parameters());
}

ckpt::Archive Trainer::save() const {
    ckpt::Archive a;
    a.put_text("config", cfg_.to_config().to_toml());
    put_u64(a, "seed", seed_);
    for (const ad::Parameter* p : params_of(rep_)) put_param(a, *p);
    auto& self = const_cast<Trainer&>(*this);
    for (ad::Parameter* p : self.low_.all_parameters()) put_param(a, *p);
    for (ad::Parameter* p : self.high_.all_parameters()) put_param(a, *p);
    a.put("normalizer/mean", column(rep_.normalizer().mean()));
    a.put("normalizer/m2", column(rep_.normalizer().m2()));
    a.put_scalar("normalizer/count", rep_.normalizer().count());
    a.put("buffer", buffer_.export_rows());
    put_rng(a, "rng/env", env_rng_);
    put_rng(a, "rng/act", act_rng_);
    put_rng(a, "rng/sample", sample_rng_);
    put_rng(a, "rng/sac_low", low_rng_);
    put_rng(a, "rng/sac_high", high_rng_);
    put_rng(a, "rng/representation", rep_rng_);

    a.put_scalar("episode/active", in_episode_ ? 1.0 : 0.0);
    if (in_episode_) {
        Matrix st(9, 1);
        st << state_.pos.x(), state_.pos.y(), state_.vel.x(), state_.vel.y(), state_.goal.x(), state_.goal.y(),
            static_cast<double>(state_.t), static_cast<double>(state_.horizon), 0.0;
        a.put("episode/env_state", st);
        a.put("episode/belief_mu", belief_.mu);
        a.put("episode/belief_sigma", belief_.Sigma);
        if (belief_.last_state) a.put("episode/belief_last_state", column(*belief_.last_state));
        a.put("episode/obs", column(obs_));
        a.put("episode/g", column(g_));
    }
    a.put_scalar("episode/index", static_cast<double>(episode_));
    a.put_scalar("episode/step", static_cast<double>(ep_step_));
    a.put_scalar("env/clamped_actions", static_cast<double>(env_.clamped_actions()));

    a.put_scalar("train/step", static_cast<double>(step_));
    Matrix counters(4, 1);
    counters << counters_.low_updates, counters_.high_updates, counters_.encoder_updates, counters_.hyper_updates;
    a.put("train/counters", counters);
    a.put_scalar("train/last_rep_loss", last_rep_loss_);
    a.put_scalar("train/latent_max", latent_max_);
    a.put("train/subgoal_center", column(high_.action_center()));
    a.put("train/subgoal_half_width", column(high_.action_scale()));
    a.put_scalar("train/window_seen", window_seen_ ? 1.0 : 0.0);
    if (window_seen_) {
        a.put("train/window_lo", column(window_lo_));
        a.put("train/window_hi", column(window_hi_));
    }
    Matrix metrics(static_cast<Eigen::Index>(metrics_.size()), 7);
    for (size_t i = 0; i < metrics_.size(); ++i) {
        const auto& r = metrics_[i];
        metrics.row(static_cast<Eigen::Index>(i)) << static_cast<double>(r.step), r.success_rate, r.mean_return,
            r.rep_loss, r.gamma2, r.ell, r.sigma2;
    }
    a.put("train/metrics", metrics);
    return a;
}

Trainer Trainer::load(const ckpt::Archive& a) {
    const TrainConfig cfg = TrainConfig::from_config(cfg::Config::parse(a.get_text("config"), "checkpoint config"));
    Trainer t(cfg, get_u64(a, "seed"));
    for (ad::Parameter* p : t.rep_.encoder_parameters()) get_param(a, *p);
    get_param(a, t.rep_.hyper());
    for (ad::Parameter* p : t.low_.all_parameters()) get_param(a, *p);
    for (ad::Parameter* p : t.high_.all_parameters()) get_param(a, *p);
    const int ds = env::kObservationDim, d = cfg.rep.latent_dim;
    t.rep_.normalizer().restore(a.get("normalizer/mean", ds, 1), a.get("normalizer/m2", ds, 1),
                                a.get_scalar("normalizer/count"));
    t.buffer_.import_rows(a.get("buffer"));
    get_rng(a, "rng/env", t.env_rng_);
    get_rng(a, "rng/act", t.act_rng_);
    get_rng(a, "rng/sample", t.sample_rng_);
    get_rng(a, "rng/sac_low", t.low_rng_);
    get_rng(a, "rng/sac_high", t.high_rng_);
    get_rng(a, "rng/representation", t.rep_rng_);

    t.in_episode_ = a.get_scalar("episode/active") != 0.0;
    if (t.in_episode_) {
        const Matrix& st = a.get("episode/env_state", 9, 1);
        t.state_.pos = {st(0), st(1)};
        t.state_.vel = {st(2), st(3)};
        t.state_.goal = {st(4), st(5)};
        t.state_.t = static_cast<int>(st(6));
        t.state_.horizon = static_cast<int>(st(7));
        t.belief_.mu = a.get("episode/belief_mu", 2, d);
        t.belief_.Sigma = a.get("episode/belief_sigma", 2, 2);
        if (a.has("episode/belief_last_state")) t.belief_.last_state = Vector(a.get("episode/belief_last_state", t.rep_.input_dim(), 1));
        t.obs_ = a.get("episode/obs", ds, 1);
        t.g_ = a.get("episode/g", d, 1);
    }
    t.episode_ = static_cast<long>(a.get_scalar("episode/index"));
    t.ep_step_ = static_cast<long>(a.get_scalar("episode/step"));
    t.env_.set_clamped_actions(static_cast<long>(a.get_scalar("env/clamped_actions")));

    t.step_ = static_cast<long>(a.get_scalar("train/step"));
    const Matrix& c = a.get("train/counters", 4, 1);
    t.counters_ = {static_cast<long>(c(0)), static_cast<long>(c(1)), static_cast<long>(c(2)), static_cast<long>(c(3))};
    t.last_rep_loss_ = a.get_scalar("train/last_rep_loss");
    t.latent_max_ = a.get_scalar("train/latent_max");
    t.high_.set_action_box(a.get("train/subgoal_center", d, 1), a.get("train/subgoal_half_width", d, 1));
    t.window_seen_ = a.get_scalar("train/window_seen") != 0.0;
    if (t.window_seen_) {
        t.window_lo_ = a.get("train/window_lo", d, 1);
        t.window_hi_ = a.get("train/window_hi", d, 1);
    }
    const Matrix& m = a.get("train/metrics");
    if (m.rows() > 0 && m.cols() != 7) throw ckpt::CheckpointError("train/metrics has the wrong width");
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        t.metrics_.push_back({static_cast<long>(m(i, 0)), m(i, 1), m(i, 2), m(i, 3), m(i, 4), m(i, 5), m(i, 6)});
    return t;
}

// ---- dumps -------------------------------------------------------------------

std::string rollout_jsonl(const std::vector<RolloutRow>& rows) {
    std::ostringstream out;
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    for (const auto& r : rows) {
        nlohmann::json j;
        j["episode"] = r.episode;
        j["step"] = r.step;
        j["s"] = vec(r.s);
        j["z"] = vec(r.z);
        j["g"] = vec(r.g);
        j["reward"] = r.reward;
        j["success"] = r.success;
        out << j.dump() << "\n";
    }
    return out.str();
}

std::string rollout_svg(const std::vector<RolloutRow>& rows) {
    const double size = 600.0, pad = 30.0;
    double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
    bool first = true;
    auto extend = [&](const Vector& p) {
        if (p.size() < 2) return;
        if (first) {
            lo_x = hi_x = p(0);
            lo_y = hi_y = p(1);
            first = false;
        }
        lo_x = std::min(lo_x, p(0));
        hi_x = std::max(hi_x, p(0));
        lo_y = std::min(lo_y, p(1));
        hi_y = std::max(hi_y, p(1));
    };
    for (const auto& r : rows) {
        extend(r.z);
        extend(r.g);
    }
    const double sx = (size - 2 * pad) / std::max(hi_x - lo_x, 1e-9);
    const double sy = (size - 2 * pad) / std::max(hi_y - lo_y, 1e-9);
    auto px = [&](double x) { return pad + (x - lo_x) * sx; };
    auto py = [&](double y) { return size - pad - (y - lo_y) * sy; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    int max_step = 1;
    for (const auto& r : rows) max_step = std::max(max_step, r.step);
    char buf[256];
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.z.size() < 2) continue;
        const double hue = 240.0 * (1.0 - static_cast<double>(r.step) / max_step);
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"hsl(%.0f,80%%,45%%)\"/>\n",
                      px(r.z(0)), py(r.z(1)), hue);
        out << buf;
        const bool new_goal = i == 0 || rows[i - 1].episode != r.episode || rows[i - 1].g != r.g;
        if (new_goal && r.g.size() >= 2) {
            std::snprintf(buf, sizeof buf,
                          "<text x=\"%.2f\" y=\"%.2f\" font-size=\"16\" text-anchor=\"middle\" "
                          "fill=\"hsl(%.0f,80%%,45%%)\">&#9733;</text>\n",
                          px(r.g(0)), py(r.g(1)) + 5.0, hue);
            out << buf;
        }
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace hlps::train
