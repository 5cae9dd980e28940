#pragma once

// Subgoal representation z = phi(s): an MLP encoder producing an
// intermediate latent f, followed by a GP layer over states. Training uses
// the batch posterior over a window of support states; rollouts use the
// constant-memory filter.

#include "hlps/autodiff.hpp"
#include "hlps/gp_core.hpp"
#include "hlps/gp_statespace.hpp"
#include "hlps/nn.hpp"
#include "hlps/rng.hpp"

#include <string>

namespace hlps::rep {

using ad::Matrix;
using ad::Vector;

enum class Variant {
    Hlps,              // encoder + GP layer, trained
    RandomProjection,  // fixed random linear map, no GP layer, never trained
    Frozen,            // encoder + GP layer at initialization, never trained
};

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

/// Running per-dimension mean and variance (Welford).
class Normalizer {
public:
    Normalizer() = default;
    explicit Normalizer(int dim);

    void update(const Vector& x);
    /// (x - mean) / max(std, 1e-2) clipped to [-5, 5]; identity until two
    /// samples are seen. The floor matters for dimensions that are constant
    /// within an episode (the goal).
    Vector apply(const Vector& x) const;
    Matrix apply_rows(const Matrix& x) const;

    int dim() const { return static_cast<int>(mean_.size()); }
    double count() const { return count_; }
    const Vector& mean() const { return mean_; }
    const Vector& m2() const { return m2_; }
    void restore(const Vector& mean, const Vector& m2, double count);

    static constexpr double kStdFloor = 1e-2;
    static constexpr double kClip = 5.0;

private:
    Vector mean_;
    Vector m2_;
    double count_ = 0.0;
};

struct RepresentationConfig {
    int latent_dim = 2;
    int hidden = 100;
    gp::GpHyperparams init = gp::GpHyperparams::from_natural(1.0, 2.0, 0.1);
    Variant variant = Variant::Hlps;
    gp::StationaryForm form = gp::StationaryForm::Derived;
    // Leading state columns seen by the encoder and the GP distance; 0 means
    // all of them.
    int input_dims = 0;
};

class RepresentationModel {
public:
    RepresentationModel() = default;
    RepresentationModel(int state_dim, const RepresentationConfig& cfg, Rng& rng);

    int state_dim() const { return state_dim_; }
    int input_dim() const { return input_dim_; }
    /// The columns of raw states that enter the encoder and the GP distance.
    Matrix inputs(const Matrix& states) const { return states.leftCols(input_dim_); }
    int latent_dim() const { return cfg_.latent_dim; }
    Variant variant() const { return cfg_.variant; }
    bool uses_gp() const { return cfg_.variant != Variant::RandomProjection; }
    bool trainable() const { return cfg_.variant == Variant::Hlps; }
    const RepresentationConfig& config() const { return cfg_; }

    /// Intermediate latent f for one state (normalized, then encoded).
    Vector encode(const Vector& s) const;
    /// Row-wise encode.
    Matrix encode_rows(const Matrix& states) const;
    /// Row-wise encode on a tape; encoder weights are bound as parameters
    /// when trainable is set, otherwise the result is a constant.
    ad::Var encode(ad::Tape& tape, const Matrix& states, bool trainable);

    gp::GpHyperparams hyperparams() const;
    /// 1x3 node [log_gamma2, log_ell, log_sigma2].
    ad::Var hyper_var(ad::Tape& tape, bool trainable);

    gp::Belief initial_belief() const;
    /// Advances the belief by the new state and returns z.
    Vector phi_online(gp::Belief& belief, const Vector& s) const;
    /// Batch posterior mean over a window of states (rows).
    Matrix phi_batch(const Matrix& states) const;
    ad::Var phi_batch(ad::Tape& tape, const Matrix& states, bool train_encoder, bool train_hyper);

    Normalizer& normalizer() { return normalizer_; }
    const Normalizer& normalizer() const { return normalizer_; }
    nn::Mlp& encoder() { return encoder_; }
    const nn::Mlp& encoder() const { return encoder_; }
    ad::Parameter& hyper() { return hyper_; }
    const ad::Parameter& hyper() const { return hyper_; }
    std::vector<ad::Parameter*> encoder_parameters() { return encoder_.parameters(); }

private:
    void check_dim(Eigen::Index cols) const;

    int state_dim_ = 0;
    int input_dim_ = 0;
    RepresentationConfig cfg_;
    nn::Mlp encoder_;
    ad::Parameter hyper_;
    Normalizer normalizer_;
};

}  // namespace hlps::rep
