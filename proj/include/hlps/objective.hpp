#pragma once

// Representation learning loss over (s_i, s_{i+1}, s_{i+k}) triplets:
//
//   (df1 / (dfk + eps)) * log(1 + exp(dz1 - dzk))
//
// with df the encoder-space distances and dz the distances between GP
// posterior means over the three support states. The ratio is a constant
// weight unless ratio_gradient is set.

#include "hlps/autodiff.hpp"
#include "hlps/replay_buffer.hpp"
#include "hlps/representation.hpp"
#include "hlps/rng.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hlps::obj {

using ad::Matrix;
using ad::Vector;

struct Triplet {
    Vector s_i;
    Vector s_next;
    Vector s_k;
    long episode_i = 0;
    long episode_next = 0;
    long episode_k = 0;
};

enum class LossVariant { Softplus, Hinge };

LossVariant parse_loss_variant(const std::string& name);
std::string to_string(LossVariant v);

struct ObjectiveConfig {
    LossVariant variant = LossVariant::Softplus;
    bool ratio_gradient = false;
    double eps = 1e-6;
    double margin = 2.0;  // hinge only
};

enum class Group { Encoder, Hyper, Both };

/// Scalar loss of one triplet from its four distances.
double triplet_term(double df1, double dfk, double dz1, double dzk, const ObjectiveConfig& cfg);

/// Mean loss over the batch. Throws std::invalid_argument for an empty batch
/// or a triplet whose states come from different episodes.
ad::Var hlps_loss(ad::Tape& tape, rep::RepresentationModel& model, std::span<const Triplet> batch,
                  const ObjectiveConfig& cfg, Group trainable);

double hlps_loss_value(rep::RepresentationModel& model, std::span<const Triplet> batch, const ObjectiveConfig& cfg);

/// A contiguous stretch of states from one episode with the triplet
/// positions (p, p + 1, q) to evaluate inside it.
struct Window {
    Matrix states;
    std::vector<Eigen::Index> anchor;
    std::vector<Eigen::Index> far;
};

/// Triplets (p, p + 1, p + k) inside a window of L states; when the window
/// reaches the episode end, p + k past the end is truncated to the last
/// state.
Window make_window(Matrix states, int k, bool episode_end);

/// Mean loss over every triplet of every window, with the GP posterior
/// computed once over each whole window.
ad::Var window_loss(ad::Tape& tape, rep::RepresentationModel& model, std::span<const Window> windows,
                    const ObjectiveConfig& cfg, Group trainable);

struct UpdateConfig {
    std::size_t triplet_batch = 64;
    std::size_t window_batch = 32;
    int k = 50;
    int T = 3;
    double encoder_lr = 1e-4;
    double hyper_lr = 1e-5;
};

/// One gradient step on the selected group (Encoder or Hyper). Returns the
/// loss before the step, or nullopt when the buffer holds nothing eligible
/// or the representation is not trainable.
std::optional<double> representation_update(rep::RepresentationModel& model, const rl::ReplayBuffer& buffer,
                                            Group which, const UpdateConfig& ucfg, const ObjectiveConfig& ocfg,
                                            Rng& rng);

std::vector<Triplet> gather_triplets(const rl::ReplayBuffer& buffer, std::span<const rl::TripletIndex> idx);

}  // namespace hlps::obj
