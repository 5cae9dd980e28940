#pragma once

// FIFO replay of single-step transitions, stored row-major in one flat
// array. Logical index 0 is the oldest transition still held. Transitions of
// one episode are contiguous, which the triplet and segment samplers rely on.

#include "hlps/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace hlps::rl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Transition {
    Vector s;
    Vector g;       // subgoal active when a was taken
    Vector a;
    double r_env = 0.0;
    double r_int = 0.0;  // intrinsic reward at collection time
    Vector s_next;
    Vector g_next;  // subgoal active at s_next
    bool done = false;  // environment terminal (success)
    bool last = false;  // final transition of its episode (terminal or timeout)
    long episode = 0;
    long step = 0;      // step index within the episode
};

/// s_i = state(i), s_{i+1} = next_state(i), s_{i+k} = next_state(end) where
/// end = i + k - 1, or the episode's final transition when it ends sooner.
struct TripletIndex {
    std::size_t i;
    std::size_t end;
};

/// One high-level segment [start, end]: starts where step % k == 0 and ends
/// k - 1 transitions later or at the episode's final transition.
struct SegmentIndex {
    std::size_t start;
    std::size_t end;
};

/// Up to T consecutive segments of one episode, covering [start, end].
struct WindowIndex {
    std::size_t start;
    std::size_t end;
    int segments;
    bool episode_end;  // window reaches the episode's final transition
};

class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int state_dim, int latent_dim, int action_dim);

    void push(const Transition& t);
    void clear();

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    int state_dim() const { return ds_; }
    int latent_dim() const { return dg_; }
    int action_dim() const { return da_; }

    Transition at(std::size_t i) const;
    Eigen::Map<const Vector> state(std::size_t i) const;
    Eigen::Map<const Vector> next_state(std::size_t i) const;
    Eigen::Map<const Vector> subgoal(std::size_t i) const;
    Eigen::Map<const Vector> action(std::size_t i) const;
    double r_env(std::size_t i) const;
    bool done(std::size_t i) const;
    bool last(std::size_t i) const;
    long episode(std::size_t i) const;
    long step(std::size_t i) const;

    /// n indices uniformly with replacement; empty when the buffer is empty.
    std::vector<std::size_t> sample_uniform(std::size_t n, Rng& rng) const;
    /// Empty when no eligible triplet exists.
    std::vector<TripletIndex> sample_triplets(std::size_t n, int k, Rng& rng) const;
    std::vector<SegmentIndex> sample_segments(std::size_t n, int k, Rng& rng) const;
    std::vector<WindowIndex> sample_windows(std::size_t n, int k, int T, Rng& rng) const;

    bool triplet_at(std::size_t i, int k, TripletIndex& out) const;
    bool segment_at(std::size_t start, int k, SegmentIndex& out) const;
    bool window_at(std::size_t start, int k, int T, WindowIndex& out) const;

    /// Sum of r_env over a segment.
    double segment_reward(const SegmentIndex& seg) const;
    /// state(start), next_state(start..end) as rows.
    Matrix window_states(std::size_t start, std::size_t end) const;

    /// Logical-order snapshot for checkpoints (size x width) and restore.
    Matrix export_rows() const;
    void import_rows(const Matrix& rows);
    int row_width() const { return width_; }

private:
    template <class Pred>
    std::vector<std::size_t> sample_eligible(std::size_t n, Rng& rng, Pred eligible) const;
    const double* row(std::size_t i) const;
    double* slot(std::size_t physical);

    std::size_t capacity_;
    int ds_, dg_, da_;
    int off_s_, off_g_, off_a_, off_renv_, off_rint_, off_sn_, off_gn_, off_flags_, off_ep_, off_step_;
    int width_;
    std::vector<double> data_;
    std::size_t head_ = 0;  // physical index of the oldest row
    std::size_t size_ = 0;
};

}  // namespace hlps::rl
