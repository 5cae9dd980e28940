#include "hlps/replay_buffer.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace hlps::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim, int latent_dim, int action_dim)
    : capacity_(capacity), ds_(state_dim), dg_(latent_dim), da_(action_dim) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    int off = 0;
    off_s_ = off;
    off += ds_;
    off_g_ = off;
    off += dg_;
    off_a_ = off;
    off += da_;
    off_renv_ = off++;
    off_rint_ = off++;
    off_sn_ = off;
    off += ds_;
    off_gn_ = off;
    off += dg_;
    off_flags_ = off++;
    off_ep_ = off++;
    off_step_ = off++;
    width_ = off;
}

void ReplayBuffer::clear() {
    data_.clear();
    head_ = 0;
    size_ = 0;
}

double* ReplayBuffer::slot(std::size_t physical) { return data_.data() + physical * static_cast<std::size_t>(width_); }

const double* ReplayBuffer::row(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("ReplayBuffer: index " + std::to_string(i) + " out of range");
    const std::size_t physical = (head_ + i) % capacity_;
    return data_.data() + physical * static_cast<std::size_t>(width_);
}

void ReplayBuffer::push(const Transition& t) {
    if (t.s.size() != ds_ || t.s_next.size() != ds_ || t.g.size() != dg_ || t.g_next.size() != dg_ ||
        t.a.size() != da_) {
        throw std::invalid_argument("ReplayBuffer: transition has wrong dimensions");
    }
    double* r;
    if (size_ < capacity_) {
        data_.resize(data_.size() + static_cast<std::size_t>(width_));
        r = slot(size_);
        ++size_;
    } else {
        r = slot(head_);
        head_ = (head_ + 1) % capacity_;
    }
    std::copy(t.s.data(), t.s.data() + ds_, r + off_s_);
    std::copy(t.g.data(), t.g.data() + dg_, r + off_g_);
    std::copy(t.a.data(), t.a.data() + da_, r + off_a_);
    r[off_renv_] = t.r_env;
    r[off_rint_] = t.r_int;
    std::copy(t.s_next.data(), t.s_next.data() + ds_, r + off_sn_);
    std::copy(t.g_next.data(), t.g_next.data() + dg_, r + off_gn_);
    r[off_flags_] = (t.done ? 1.0 : 0.0) + (t.last ? 2.0 : 0.0);
    r[off_ep_] = static_cast<double>(t.episode);
    r[off_step_] = static_cast<double>(t.step);
}

Transition ReplayBuffer::at(std::size_t i) const {
    const double* r = row(i);
    Transition t;
    t.s = Eigen::Map<const Vector>(r + off_s_, ds_);
    t.g = Eigen::Map<const Vector>(r + off_g_, dg_);
    t.a = Eigen::Map<const Vector>(r + off_a_, da_);
    t.r_env = r[off_renv_];
    t.r_int = r[off_rint_];
    t.s_next = Eigen::Map<const Vector>(r + off_sn_, ds_);
    t.g_next = Eigen::Map<const Vector>(r + off_gn_, dg_);
    t.done = done(i);
    t.last = last(i);
    t.episode = episode(i);
    t.step = step(i);
    return t;
}

Eigen::Map<const Vector> ReplayBuffer::state(std::size_t i) const { return {row(i) + off_s_, ds_}; }
Eigen::Map<const Vector> ReplayBuffer::next_state(std::size_t i) const { return {row(i) + off_sn_, ds_}; }
Eigen::Map<const Vector> ReplayBuffer::subgoal(std::size_t i) const { return {row(i) + off_g_, dg_}; }
Eigen::Map<const Vector> ReplayBuffer::action(std::size_t i) const { return {row(i) + off_a_, da_}; }
double ReplayBuffer::r_env(std::size_t i) const { return row(i)[off_renv_]; }
bool ReplayBuffer::done(std::size_t i) const { return (static_cast<int>(row(i)[off_flags_]) & 1) != 0; }
bool ReplayBuffer::last(std::size_t i) const { return (static_cast<int>(row(i)[off_flags_]) & 2) != 0; }
long ReplayBuffer::episode(std::size_t i) const { return static_cast<long>(row(i)[off_ep_]); }
long ReplayBuffer::step(std::size_t i) const { return static_cast<long>(row(i)[off_step_]); }

std::vector<std::size_t> ReplayBuffer::sample_uniform(std::size_t n, Rng& rng) const {
    std::vector<std::size_t> out;
    if (size_ == 0) return out;
    out.reserve(n);
    for (std::size_t j = 0; j < n; ++j) out.push_back(rng.index(size_));
    return out;
}

template <class Pred>
std::vector<std::size_t> ReplayBuffer::sample_eligible(std::size_t n, Rng& rng, Pred eligible) const {
    std::vector<std::size_t> out;
    if (size_ == 0 || n == 0) return out;
    out.reserve(n);
    const std::size_t attempts = 64 * n + 1024;
    for (std::size_t a = 0; a < attempts && out.size() < n; ++a) {
        const std::size_t i = rng.index(size_);
        if (eligible(i)) out.push_back(i);
    }
    if (out.size() < n) {
        // Rare: eligible indices are sparse. Enumerate and sample the rest.
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < size_; ++i)
            if (eligible(i)) pool.push_back(i);
        if (pool.empty()) return {};
        while (out.size() < n) out.push_back(pool[rng.index(pool.size())]);
    }
    return out;
}

bool ReplayBuffer::triplet_at(std::size_t i, int k, TripletIndex& out) const {
    if (k < 1) throw std::invalid_argument("triplet sampling needs k >= 1");
    const long ep = episode(i);
    const std::size_t target = i + static_cast<std::size_t>(k) - 1;
    for (std::size_t t = i; t < size_ && t <= target; ++t) {
        if (episode(t) != ep) return false;
        if (t == target || last(t)) {
            out = {i, t};
            return true;
        }
    }
    return false;
}

bool ReplayBuffer::segment_at(std::size_t start, int k, SegmentIndex& out) const {
    if (k < 1) throw std::invalid_argument("segment sampling needs k >= 1");
    if (step(start) % k != 0) return false;
    TripletIndex t;
    if (!triplet_at(start, k, t)) return false;
    out = {start, t.end};
    return true;
}

bool ReplayBuffer::window_at(std::size_t start, int k, int T, WindowIndex& out) const {
    if (T < 1) throw std::invalid_argument("window sampling needs T >= 1");
    SegmentIndex seg;
    if (!segment_at(start, k, seg)) return false;
    out = {start, seg.end, 1, last(seg.end)};
    while (out.segments < T && !out.episode_end) {
        const std::size_t next = out.end + 1;
        if (next >= size_ || !segment_at(next, k, seg)) break;
        out.end = seg.end;
        out.episode_end = last(seg.end);
        ++out.segments;
    }
    return true;
}

std::vector<TripletIndex> ReplayBuffer::sample_triplets(std::size_t n, int k, Rng& rng) const {
    TripletIndex tmp;
    const auto idx = sample_eligible(n, rng, [&](std::size_t i) { return triplet_at(i, k, tmp); });
    std::vector<TripletIndex> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        triplet_at(i, k, tmp);
        out.push_back(tmp);
    }
    return out;
}

std::vector<SegmentIndex> ReplayBuffer::sample_segments(std::size_t n, int k, Rng& rng) const {
    SegmentIndex tmp;
    const auto idx = sample_eligible(n, rng, [&](std::size_t i) { return segment_at(i, k, tmp); });
    std::vector<SegmentIndex> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        segment_at(i, k, tmp);
        out.push_back(tmp);
    }
    return out;
}

std::vector<WindowIndex> ReplayBuffer::sample_windows(std::size_t n, int k, int T, Rng& rng) const {
    WindowIndex tmp;
    const auto idx = sample_eligible(n, rng, [&](std::size_t i) { return window_at(i, k, T, tmp); });
    std::vector<WindowIndex> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        window_at(i, k, T, tmp);
        out.push_back(tmp);
    }
    return out;
}

double ReplayBuffer::segment_reward(const SegmentIndex& seg) const {
    double acc = 0.0;
    for (std::size_t t = seg.start; t <= seg.end; ++t) acc += r_env(t);
    return acc;
}

Matrix ReplayBuffer::window_states(std::size_t start, std::size_t end) const {
    if (end < start) throw std::invalid_argument("window_states: end before start");
    Matrix out(static_cast<Eigen::Index>(end - start + 2), ds_);
    out.row(0) = state(start).transpose();
    for (std::size_t t = start; t <= end; ++t) out.row(static_cast<Eigen::Index>(t - start + 1)) = next_state(t).transpose();
    return out;
}

Matrix ReplayBuffer::export_rows() const {
    Matrix out(static_cast<Eigen::Index>(size_), width_);
    for (std::size_t i = 0; i < size_; ++i)
        out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(row(i), width_);
    return out;
}

void ReplayBuffer::import_rows(const Matrix& rows) {
    if (rows.rows() > 0 && rows.cols() != width_) throw std::invalid_argument("ReplayBuffer: row width mismatch");
    if (static_cast<std::size_t>(rows.rows()) > capacity_) throw std::invalid_argument("ReplayBuffer: too many rows");
    clear();
    data_.resize(static_cast<std::size_t>(rows.rows()) * static_cast<std::size_t>(width_));
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        Eigen::Map<Eigen::RowVectorXd>(slot(static_cast<std::size_t>(i)), width_) = rows.row(i);
    size_ = static_cast<std::size_t>(rows.rows());
}

}  // namespace hlps::rl
