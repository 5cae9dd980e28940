#include "hlps/representation.hpp"

#include <cmath>
#include <stdexcept>

namespace hlps::rep {

Variant parse_variant(const std::string& name) {
    if (name == "hlps") return Variant::Hlps;
    if (name == "random_projection") return Variant::RandomProjection;
    if (name == "frozen") return Variant::Frozen;
    throw std::invalid_argument("unknown representation variant '" + name + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Hlps: return "hlps";
        case Variant::RandomProjection: return "random_projection";
        case Variant::Frozen: return "frozen";
    }
    return "?";
}

Normalizer::Normalizer(int dim) : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

void Normalizer::update(const Vector& x) {
    if (x.size() != mean_.size()) throw std::invalid_argument("Normalizer: dimension mismatch");
    count_ += 1.0;
    const Vector delta = x - mean_;
    mean_ += delta / count_;
    m2_ += delta.cwiseProduct(x - mean_);
}

Vector Normalizer::apply(const Vector& x) const {
    return apply_rows(x.transpose()).row(0).transpose();
}

Matrix Normalizer::apply_rows(const Matrix& x) const {
    if (x.cols() != mean_.size()) throw std::invalid_argument("Normalizer: dimension mismatch");
    if (count_ < 2.0) return x;
    const Eigen::RowVectorXd inv =
        (m2_ / count_).array().max(0.0).sqrt().max(kStdFloor).inverse().matrix().transpose();
    Matrix out = x;
    out.rowwise() -= mean_.transpose();
    out.array().rowwise() *= inv.array();
    return out.cwiseMax(-kClip).cwiseMin(kClip);
}

void Normalizer::restore(const Vector& mean, const Vector& m2, double count) {
    if (mean.size() != m2.size()) throw std::invalid_argument("Normalizer: inconsistent restore");
    mean_ = mean;
    m2_ = m2;
    count_ = count;
}

RepresentationModel::RepresentationModel(int state_dim, const RepresentationConfig& cfg, Rng& rng)
    : state_dim_(state_dim), input_dim_(cfg.input_dims > 0 ? cfg.input_dims : state_dim), cfg_(cfg),
      normalizer_(state_dim) {
    if (state_dim < 1 || cfg.latent_dim < 1 || cfg.hidden < 1)
        throw std::invalid_argument("RepresentationModel: dimensions must be positive");
    if (cfg.input_dims < 0 || cfg.input_dims > state_dim)
        throw std::invalid_argument("RepresentationModel: input_dims out of range");
    cfg.init.validate();
    if (cfg.variant == Variant::RandomProjection) {
        encoder_ = nn::Mlp("encoder", {input_dim_, cfg.latent_dim}, rng);
    } else {
        encoder_ = nn::Mlp("encoder", {input_dim_, cfg.hidden, cfg.latent_dim}, rng);
    }
    Matrix packed(1, 3);
    packed << cfg.init.log_gamma2, cfg.init.log_ell, cfg.init.log_sigma2;
    hyper_ = ad::Parameter("gp.log_hyper", packed);
}

void RepresentationModel::check_dim(Eigen::Index cols) const {
    if (cols != state_dim_) {
        throw std::invalid_argument("representation: state has dimension " + std::to_string(cols) + ", expected " +
                                    std::to_string(state_dim_));
    }
}

Vector RepresentationModel::encode(const Vector& s) const {
    check_dim(s.size());
    const Matrix row = normalizer_.apply(s).transpose();
    return encoder_.forward_value(inputs(row)).row(0).transpose();
}

Matrix RepresentationModel::encode_rows(const Matrix& states) const {
    check_dim(states.cols());
    return encoder_.forward_value(inputs(normalizer_.apply_rows(states)));
}

ad::Var RepresentationModel::encode(ad::Tape& tape, const Matrix& states, bool trainable) {
    check_dim(states.cols());
    if (!trainable) return tape.constant(encode_rows(states));
    return encoder_.forward(tape, tape.constant(inputs(normalizer_.apply_rows(states))));
}

gp::GpHyperparams RepresentationModel::hyperparams() const {
    return {hyper_.value(0, 0), hyper_.value(0, 1), hyper_.value(0, 2)};
}

ad::Var RepresentationModel::hyper_var(ad::Tape& tape, bool trainable) {
    return trainable ? tape.param(hyper_) : tape.constant(hyper_.value);
}

gp::Belief RepresentationModel::initial_belief() const {
    return gp::initial_belief(hyperparams(), cfg_.latent_dim, cfg_.form);
}

Vector RepresentationModel::phi_online(gp::Belief& belief, const Vector& s) const {
    const Vector f = encode(s);
    if (!uses_gp()) {
        belief.last_state = Vector(s.head(input_dim_));
        return f;
    }
    belief = gp::step(belief, s.head(input_dim_), f, hyperparams(), cfg_.form);
    return belief.observed_mean();
}

Matrix RepresentationModel::phi_batch(const Matrix& states) const {
    const Matrix f = encode_rows(states);
    if (!uses_gp()) return f;
    return gp::batch_posterior({inputs(states), f}, hyperparams()).mean;
}

ad::Var RepresentationModel::phi_batch(ad::Tape& tape, const Matrix& states, bool train_encoder, bool train_hyper) {
    ad::Var f = encode(tape, states, train_encoder);
    if (!uses_gp()) return f;
    const auto hv = gp::split_hyperparams(hyper_var(tape, train_hyper));
    return gp::posterior_mean_var(gp::distance_matrix(inputs(states)), f, hv);
}

}  // namespace hlps::rep
