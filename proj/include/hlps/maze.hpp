#pragma once

// Continuous point-mass maze with walls laid out on a character grid.
//
// Layout text format: one row of the maze per line, top row first, '#' for
// a wall cell and '.' for free space. Lines starting with ';' are comments.
// An optional "cell=<size>" line sets the side length of each cell (default
// 1). The maze occupies [0, cols*cell] x [0, rows*cell].

#include "hlps/rng.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace hlps::env {

using Vec2 = Eigen::Vector2d;
using Vector = Eigen::VectorXd;

enum class RewardMode { Dense, Sparse };
enum class GoalSampling { Random, Fixed };

class MazeLayout {
public:
    static MazeLayout parse(const std::string& text);
    static MazeLayout from_file(const std::string& path);
    /// "umaze" (12x12), "fourrooms" (18x18) or "open" (12x12, no walls).
    static MazeLayout builtin(const std::string& name);

    bool is_free(const Vec2& p) const;
    double width() const { return cols_ * cell_; }
    double height() const { return rows_ * cell_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double cell() const { return cell_; }
    const std::vector<std::string>& grid() const { return grid_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    double cell_ = 1.0;
    std::vector<std::string> grid_;
};

struct MazeConfig {
    std::string layout = "umaze";
    std::string layout_file;  // overrides layout when set
    double noise_sigma = 0.1;
    RewardMode reward_mode = RewardMode::Sparse;
    double success_radius = 0.5;
    int horizon = 500;
    GoalSampling goal_sampling = GoalSampling::Random;
    Vec2 fixed_goal{2.0, 10.0};
    /// Evaluation episodes start here when set; training starts are uniform.
    bool fixed_start_enabled = false;
    Vec2 fixed_start{2.0, 2.0};
    double v_max = 1.0;

    void validate() const;
    MazeLayout load_layout() const;
};

struct EnvState {
    Vec2 pos = Vec2::Zero();
    Vec2 vel = Vec2::Zero();
    Vec2 goal = Vec2::Zero();
    int t = 0;
    int horizon = 1;

    /// [x, y, vx, vy, remaining_time / horizon, goal_x, goal_y]
    Vector observation() const;
};

inline constexpr int kObservationDim = 7;
// Leading observation columns that describe the agent (position, velocity).
inline constexpr int kAgentStateDim = 4;

struct StepResult {
    EnvState state;
    double reward = 0.0;
    bool done = false;
    bool success = false;
};

class PointMaze {
public:
    explicit PointMaze(MazeConfig config);

    EnvState reset(Rng& rng) const;
    /// Velocity-damped integration with additive position noise; actions
    /// outside [-1, 1] are clamped and counted.
    StepResult step(const EnvState& state, const Vec2& action, Rng& rng);

    const MazeConfig& config() const { return config_; }
    const MazeLayout& layout() const { return layout_; }
    long clamped_actions() const { return clamped_actions_; }
    void set_clamped_actions(long n) { clamped_actions_ = n; }

    Vec2 sample_free(Rng& rng) const;

private:
    Vec2 move(const Vec2& from, const Vec2& displacement, Vec2& vel) const;

    MazeConfig config_;
    MazeLayout layout_;
    long clamped_actions_ = 0;
};

/// Maze success: the agent came within the radius at some step (the episode
/// terminates there, so this is also the final step).
bool success_metric(const std::vector<StepResult>& episode);

}  // namespace hlps::env
