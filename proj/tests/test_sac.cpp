#include <doctest.h>

#include "hlps/gradcheck.hpp"
#include "hlps/rewards.hpp"
#include "hlps/sac.hpp"

#include <cmath>

using namespace hlps;
using rl::SacAgent;

namespace {

rl::SacConfig small() {
    rl::SacConfig c;
    c.hidden = 8;
    return c;
}

rl::Batch batch(Rng& rng, int n, int obs, int act, const Eigen::VectorXd& scale) {
    rl::Batch b;
    b.obs = rng.normal_matrix(n, obs);
    b.act = (rng.normal_matrix(n, act).array().tanh() * 0.9).matrix() * scale.asDiagonal();
    b.rew = rng.normal_matrix(n, 1);
    b.next_obs = rng.normal_matrix(n, obs);
    b.done = Eigen::MatrixXd::Zero(n, 1);
    return b;
}

}  // namespace

TEST_CASE("intrinsic and high-level rewards") {
    Eigen::VectorXd z(2), g(2);
    z << 1, 2;
    g << 4, 6;
    CHECK(rl::intrinsic_reward(z, g) == doctest::Approx(-5.0));
    CHECK(rl::intrinsic_reward(z, z) == 0.0);
    CHECK_THROWS(rl::intrinsic_reward(z, Eigen::VectorXd::Zero(3)));
    const double r[] = {0.0, 1.0, 0.5};
    CHECK(rl::high_level_reward(r) == 1.5);
}

TEST_CASE("actions stay inside the scaled bounds") {
    Rng rng(1);
    Eigen::VectorXd scale(2);
    scale << 3.0, 0.5;
    SacAgent agent("a", 4, 2, scale, small(), rng);
    for (int i = 0; i < 200; ++i) {
        const Eigen::VectorXd o = rng.normal_matrix(4, 1) * 10.0;
        const Eigen::VectorXd a = agent.act(o, i % 2 == 0, rng);
        CHECK(std::abs(a(0)) <= 3.0);
        CHECK(std::abs(a(1)) <= 0.5);
    }
    CHECK_THROWS(agent.act(Eigen::VectorXd::Zero(3), true, rng));
    CHECK_THROWS(agent.set_action_scale(Eigen::VectorXd::Zero(2)));

    Eigen::VectorXd center(2);
    center << -10.0, 4.0;
    agent.set_action_box(center, scale);
    for (int i = 0; i < 200; ++i) {
        const Eigen::VectorXd o = rng.normal_matrix(4, 1) * 10.0;
        const Eigen::VectorXd a = agent.act(o, i % 2 == 0, rng);
        CHECK(std::abs(a(0) + 10.0) <= 3.0);
        CHECK(std::abs(a(1) - 4.0) <= 0.5);
    }
    CHECK_THROWS(agent.set_action_box(Eigen::VectorXd::Zero(3), scale));
}

TEST_CASE("sampled log-density agrees with the density of the returned action") {
    Rng rng(2);
    Eigen::VectorXd scale(2);
    scale << 2.0, 1.0;
    SacAgent agent("a", 3, 2, scale, small(), rng);
    const Eigen::MatrixXd obs = rng.normal_matrix(20, 3);
    const Eigen::MatrixXd noise = rng.normal_matrix(20, 2) * 0.5;
    const auto s = agent.sample(obs, noise);
    for (int i = 0; i < 20; ++i)
        CHECK(agent.log_prob(obs.row(i).transpose(), s.action.row(i).transpose()) ==
              doctest::Approx(s.logp(i)).epsilon(1e-7));
}

TEST_CASE("squashed unit-action density integrates to one in 1-D") {
    Rng rng(3);
    Eigen::VectorXd scale(1), center(1);
    scale << 2.5;
    center << 1.0;
    SacAgent agent("a", 2, 1, scale, small(), rng);
    agent.set_action_box(center, scale);
    const Eigen::VectorXd o = rng.normal_matrix(2, 1);
    // midpoint rule over the unit action y in (-1, 1); a = 1 + 2.5 y
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd a(1);
        a(0) = 1.0 + 2.5 * (-1.0 + (i + 0.5) * 2.0 / n);
        acc += std::exp(agent.log_prob(o, a)) * 2.0 / n;
    }
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-3));
    Eigen::VectorXd outside(1);
    outside << -1.6;
    CHECK(std::isinf(agent.log_prob(o, outside)));
}

TEST_CASE("critic targets follow the soft Bellman backup") {
    Rng rng(4);
    auto cfg = small();
    SacAgent agent("a", 3, 2, Eigen::VectorXd::Ones(2), cfg, rng);
    auto b = batch(rng, 6, 3, 2, Eigen::VectorXd::Ones(2));
    b.done(2, 0) = 1.0;
    const Eigen::MatrixXd noise = rng.normal_matrix(6, 2);
    const Eigen::MatrixXd y = agent.critic_targets(b, noise);
    const auto next = agent.sample(b.next_obs, noise);
    Eigen::MatrixXd x(6, 5);
    x << b.next_obs, next.action;
    const Eigen::MatrixXd q1 = agent.target(0).forward_value(x), q2 = agent.target(1).forward_value(x);
    for (int i = 0; i < 6; ++i) {
        const double boot = std::min(q1(i, 0), q2(i, 0)) - agent.alpha() * next.logp(i);
        const double expect = cfg.reward_scale * b.rew(i, 0) + cfg.gamma * (1.0 - b.done(i, 0)) * boot;
        CHECK(y(i, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(y(2, 0) == doctest::Approx(cfg.reward_scale * b.rew(2, 0)));
}

TEST_CASE("targets start equal to the critics and track them by tau") {
    Rng rng(5);
    auto cfg = small();
    SacAgent agent("a", 3, 2, Eigen::VectorXd::Ones(2), cfg, rng);
    for (int i = 0; i < 2; ++i) {
        auto c = agent.critic(i).parameters();
        auto t = agent.target(i).parameters();
        for (size_t j = 0; j < c.size(); ++j) CHECK(c[j]->value == t[j]->value);
    }
    const auto before = agent.target(0).parameters()[0]->value;
    agent.update(batch(rng, 16, 3, 2, Eigen::VectorXd::Ones(2)), rng);
    const auto crit = agent.critic(0).parameters()[0]->value;
    const auto after = agent.target(0).parameters()[0]->value;
    CHECK((after - ((1 - cfg.tau) * before + cfg.tau * crit)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("actor loss treats the critics as constants") {
    Rng rng(6);
    SacAgent agent("a", 3, 2, Eigen::VectorXd::Ones(2), small(), rng);
    for (auto* p : agent.all_parameters()) p->zero_grad();
    ad::Tape tape;
    tape.backward(agent.actor_loss(tape, batch(rng, 8, 3, 2, Eigen::VectorXd::Ones(2)), rng.normal_matrix(8, 2)));
    for (auto* p : agent.critic_parameters()) CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
    double actor = 0.0;
    for (auto* p : agent.actor_parameters()) actor = std::max(actor, p->grad.cwiseAbs().maxCoeff());
    CHECK(actor > 0.0);
}

TEST_CASE("loss gradients match central differences") {
    Rng rng(7);
    auto cfg = small();
    cfg.hidden = 4;
    Eigen::VectorXd scale(2);
    scale << 1.5, 0.7;
    SacAgent agent("a", 3, 2, scale, cfg, rng);
    const auto b = batch(rng, 5, 3, 2, scale);
    const Eigen::MatrixXd nn = rng.normal_matrix(5, 2), n = rng.normal_matrix(5, 2);

    for (auto* p : agent.all_parameters()) p->zero_grad();
    {
        ad::Tape t;
        t.backward(agent.critic_loss(t, b, nn));
    }
    for (auto* p : agent.critic_parameters()) {
        const Eigen::MatrixXd g = p->grad;
        auto f = [&] {
            ad::Tape t;
            return agent.critic_loss(t, b, nn).scalar();
        };
        CHECK(check::relative_error(g, check::numeric_gradient(f, p->value), 1e-8) < 1e-6);
    }
    Eigen::VectorXd logp;
    {
        ad::Tape t;
        t.backward(agent.actor_loss(t, b, n, &logp));
    }
    for (auto* p : agent.actor_parameters()) {
        const Eigen::MatrixXd g = p->grad;
        auto f = [&] {
            ad::Tape t;
            return agent.actor_loss(t, b, n).scalar();
        };
        CHECK(check::relative_error(g, check::numeric_gradient(f, p->value), 1e-8) < 1e-6);
    }
    // d/d log_alpha of -log_alpha * mean(logp + target) is the constant -mean(logp + target)
    {
        agent.log_alpha().zero_grad();
        ad::Tape t;
        t.backward(agent.alpha_loss(t, logp));
        CHECK(agent.log_alpha().grad(0, 0) == doctest::Approx(-(logp.array() + agent.target_entropy()).mean()));
    }
}

TEST_CASE("temperature moves toward the entropy target") {
    Rng rng(8);
    auto cfg = small();
    cfg.lr = 1e-2;
    SacAgent agent("a", 3, 2, Eigen::VectorXd::Ones(2), cfg, rng);
    const double a0 = agent.alpha();
    const auto b = batch(rng, 32, 3, 2, Eigen::VectorXd::Ones(2));
    Eigen::VectorXd logp;
    ad::Tape tape;
    agent.actor_loss(tape, b, rng.normal_matrix(32, 2), &logp);
    const bool entropy_high = (logp.array() + agent.target_entropy()).mean() < 0.0;
    agent.update(b, rng);
    CHECK((agent.alpha() < a0) == entropy_high);

    cfg.learn_alpha = false;
    SacAgent fixed("b", 3, 2, Eigen::VectorXd::Ones(2), cfg, rng);
    fixed.update(b, rng);
    CHECK(fixed.alpha() == doctest::Approx(cfg.init_alpha));
}

TEST_CASE("updates fit a one-step bandit") {
    // Reward -(a - 0.5)^2 on a single dummy state, gamma 0: the mean action moves to 0.5.
    Rng rng(9);
    rl::SacConfig cfg;
    cfg.hidden = 32;
    cfg.gamma = 0.0;
    cfg.lr = 3e-3;
    cfg.reward_scale = 1.0;
    cfg.init_alpha = 0.01;
    cfg.learn_alpha = false;
    SacAgent agent("bandit", 1, 1, Eigen::VectorXd::Ones(1), cfg, rng);
    for (int it = 0; it < 1500; ++it) {
        rl::Batch b;
        b.obs = Eigen::MatrixXd::Ones(64, 1);
        b.next_obs = b.obs;
        b.act = Eigen::MatrixXd::Random(64, 1);
        b.rew = -(b.act.array() - 0.5).square().matrix();
        b.done = Eigen::MatrixXd::Ones(64, 1);
        agent.update(b, rng);
    }
    const Eigen::VectorXd a = agent.act(Eigen::VectorXd::Ones(1), true, rng);
    CHECK(a(0) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("non-finite losses abort the update") {
    Rng rng(10);
    SacAgent agent("a", 3, 2, Eigen::VectorXd::Ones(2), small(), rng);
    auto b = batch(rng, 4, 3, 2, Eigen::VectorXd::Ones(2));
    b.rew(0, 0) = std::nan("");
    CHECK_THROWS_AS(agent.update(b, rng), ad::NonFiniteValue);
    auto bad = batch(rng, 4, 3, 2, Eigen::VectorXd::Ones(2));
    bad.rew.resize(3, 1);
    CHECK_THROWS(agent.update(bad, rng));
}
