#pragma once

#include <Eigen/Dense>

#include <span>

namespace hlps::rl {

/// -||z_next - g||, the low-level reward for reaching subgoal g in latent space.
double intrinsic_reward(const Eigen::Ref<const Eigen::VectorXd>& z_next, const Eigen::Ref<const Eigen::VectorXd>& g);

/// Sum of the environment rewards collected over one high-level segment.
double high_level_reward(std::span<const double> env_rewards);

}  // namespace hlps::rl
