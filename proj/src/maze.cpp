#include "hlps/maze.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hlps::env {

namespace {

const char* kUMaze =
    "cell=4\n"
    "...\n"
    "##.\n"
    "...\n";

const char* kFourRooms =
    "cell=2\n"
    "....#....\n"
    "....#....\n"
    ".........\n"
    "....#....\n"
    "##.###.##\n"
    "....#....\n"
    ".........\n"
    "....#....\n"
    "....#....\n";

const char* kOpen =
    "cell=12\n"
    ".\n";

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

MazeLayout MazeLayout::parse(const std::string& text) {
    MazeLayout out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == ';') continue;
        if (line.rfind("cell=", 0) == 0) {
            try {
                out.cell_ = std::stod(line.substr(5));
            } catch (const std::exception&) {
                throw std::invalid_argument("layout line " + std::to_string(lineno) + ": bad cell size");
            }
            if (!(out.cell_ > 0.0) || !std::isfinite(out.cell_))
                throw std::invalid_argument("layout line " + std::to_string(lineno) + ": cell size must be positive");
            continue;
        }
        for (char c : line)
            if (c != '#' && c != '.')
                throw std::invalid_argument("layout line " + std::to_string(lineno) + ": unexpected character '" +
                                            std::string(1, c) + "'");
        if (!out.grid_.empty() && line.size() != out.grid_.front().size())
            throw std::invalid_argument("layout line " + std::to_string(lineno) + ": ragged row");
        out.grid_.push_back(line);
    }
    if (out.grid_.empty()) throw std::invalid_argument("layout has no rows");
    out.rows_ = static_cast<int>(out.grid_.size());
    out.cols_ = static_cast<int>(out.grid_.front().size());
    bool any_free = false;
    for (const auto& row : out.grid_) any_free |= row.find('.') != std::string::npos;
    if (!any_free) throw std::invalid_argument("layout has no free cell");
    return out;
}

MazeLayout MazeLayout::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open layout file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

MazeLayout MazeLayout::builtin(const std::string& name) {
    if (name == "umaze") return parse(kUMaze);
    if (name == "fourrooms") return parse(kFourRooms);
    if (name == "open") return parse(kOpen);
    throw std::invalid_argument("unknown layout '" + name + "'");
}

bool MazeLayout::is_free(const Vec2& p) const {
    if (!p.allFinite()) return false;
    if (p.x() < 0.0 || p.y() < 0.0 || p.x() >= width() || p.y() >= height()) return false;
    const int col = static_cast<int>(p.x() / cell_);
    const int row_from_bottom = static_cast<int>(p.y() / cell_);
    if (col >= cols_ || row_from_bottom >= rows_) return false;
    return grid_[static_cast<size_t>(rows_ - 1 - row_from_bottom)][static_cast<size_t>(col)] == '.';
}

void MazeConfig::validate() const {
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw std::invalid_argument("env.noise_sigma must be >= 0");
    if (!(success_radius > 0.0)) throw std::invalid_argument("env.success_radius must be > 0");
    if (horizon < 1) throw std::invalid_argument("env.horizon must be >= 1");
    if (!(v_max > 0.0)) throw std::invalid_argument("env.v_max must be > 0");
    const MazeLayout layout = load_layout();
    if (goal_sampling == GoalSampling::Fixed && !layout.is_free(fixed_goal))
        throw std::invalid_argument("env.fixed_goal is not in free space");
    if (fixed_start_enabled && !layout.is_free(fixed_start))
        throw std::invalid_argument("env.fixed_start is not in free space");
}

MazeLayout MazeConfig::load_layout() const {
    return layout_file.empty() ? MazeLayout::builtin(layout) : MazeLayout::from_file(layout_file);
}

Vector EnvState::observation() const {
    Vector o(kObservationDim);
    o << pos.x(), pos.y(), vel.x(), vel.y(), static_cast<double>(horizon - t) / horizon, goal.x(), goal.y();
    return o;
}

PointMaze::PointMaze(MazeConfig config) : config_(std::move(config)) {
    config_.validate();
    layout_ = config_.load_layout();
}

Vec2 PointMaze::sample_free(Rng& rng) const {
    for (;;) {
        Vec2 p(rng.uniform(0.0, layout_.width()), rng.uniform(0.0, layout_.height()));
        if (layout_.is_free(p)) return p;
    }
}

EnvState PointMaze::reset(Rng& rng) const {
    EnvState s;
    s.horizon = config_.horizon;
    s.goal = config_.goal_sampling == GoalSampling::Fixed ? config_.fixed_goal : sample_free(rng);
    if (config_.fixed_start_enabled) {
        s.pos = config_.fixed_start;
    } else {
        do {
            s.pos = sample_free(rng);
        } while ((s.pos - s.goal).norm() <= config_.success_radius);
    }
    return s;
}

Vec2 PointMaze::move(const Vec2& from, const Vec2& displacement, Vec2& vel) const {
    // Sub-steps keep each probe shorter than a quarter cell so thin walls
    // cannot be tunnelled through.
    const double limit = 0.25 * layout_.cell();
    const int n = std::max(1, static_cast<int>(std::ceil(displacement.cwiseAbs().maxCoeff() / limit)));
    const Vec2 d = displacement / n;
    Vec2 p = from;
    bool blocked_x = false, blocked_y = false;
    for (int i = 0; i < n; ++i) {
        if (!blocked_x) {
            const Vec2 c(p.x() + d.x(), p.y());
            if (layout_.is_free(c)) p = c;
            else blocked_x = true;
        }
        if (!blocked_y) {
            const Vec2 c(p.x(), p.y() + d.y());
            if (layout_.is_free(c)) p = c;
            else blocked_y = true;
        }
    }
    if (blocked_x) vel.x() = 0.0;
    if (blocked_y) vel.y() = 0.0;
    return p;
}

StepResult PointMaze::step(const EnvState& state, const Vec2& action, Rng& rng) {
    Vec2 a = action;
    if (!a.allFinite()) throw std::invalid_argument("non-finite action");
    if ((a.array().abs() > 1.0).any()) {
        ++clamped_actions_;
        a = a.cwiseMax(-1.0).cwiseMin(1.0);
    }
    StepResult out;
    out.state = state;
    EnvState& s = out.state;
    s.vel = 0.8 * state.vel + 0.2 * config_.v_max * a;
    const Vec2 noise(rng.normal() * config_.noise_sigma, rng.normal() * config_.noise_sigma);
    s.pos = move(state.pos, s.vel + noise, s.vel);
    s.t = state.t + 1;
    const double dist = (s.pos - s.goal).norm();
    out.success = dist <= config_.success_radius;
    out.reward = config_.reward_mode == RewardMode::Dense ? -dist : (out.success ? 1.0 : 0.0);
    out.done = out.success || s.t >= s.horizon;
    return out;
}

bool success_metric(const std::vector<StepResult>& episode) {
    return std::any_of(episode.begin(), episode.end(), [](const StepResult& r) { return r.success; });
}

}  // namespace hlps::env
