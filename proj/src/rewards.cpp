#include "hlps/rewards.hpp"

#include <numeric>
#include <stdexcept>

namespace hlps::rl {

double intrinsic_reward(const Eigen::Ref<const Eigen::VectorXd>& z_next, const Eigen::Ref<const Eigen::VectorXd>& g) {
    if (z_next.size() != g.size()) throw std::invalid_argument("intrinsic_reward: latent dimension mismatch");
    return -(z_next - g).norm();
}

double high_level_reward(std::span<const double> env_rewards) {
    return std::accumulate(env_rewards.begin(), env_rewards.end(), 0.0);
}

}  // namespace hlps::rl
