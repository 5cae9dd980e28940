#include "hlps/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace hlps::nn {

Mlp::Mlp(std::string name, const std::vector<int>& sizes, Rng& rng) : sizes_(sizes) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l], fan_out = sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Matrix w(fan_in, fan_out);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
        Matrix b(1, fan_out);
        for (Eigen::Index j = 0; j < b.cols(); ++j) b(0, j) = rng.uniform(-bound, bound);
        weights_.emplace_back(name + ".w" + std::to_string(l), std::move(w));
        biases_.emplace_back(name + ".b" + std::to_string(l), std::move(b));
    }
}

Var Mlp::forward(Tape& tape, const Var& x, bool bind_params) {
    if (x.cols() != in_dim()) {
        throw ad::ShapeError("Mlp: input has " + std::to_string(x.cols()) + " columns, expected " +
                             std::to_string(in_dim()));
    }
    Var h = x;
    for (size_t l = 0; l < weights_.size(); ++l) {
        const Var w = bind_params ? tape.param(weights_[l]) : tape.constant(weights_[l].value);
        const Var b = bind_params ? tape.param(biases_[l]) : tape.constant(biases_[l].value);
        h = ad::add_row(ad::matmul(h, w), b);
        if (l + 1 < weights_.size()) h = ad::relu(h);
    }
    return h;
}

Matrix Mlp::forward_value(const Matrix& x) const {
    if (x.cols() != in_dim()) {
        throw ad::ShapeError("Mlp: input has " + std::to_string(x.cols()) + " columns, expected " +
                             std::to_string(in_dim()));
    }
    Matrix h = x;
    for (size_t l = 0; l < weights_.size(); ++l) {
        Matrix next = h * weights_[l].value;
        next.rowwise() += biases_[l].value.row(0);
        if (l + 1 < weights_.size()) next = next.cwiseMax(0.0);
        h = std::move(next);
    }
    return h;
}

std::vector<Parameter*> Mlp::parameters() {
    std::vector<Parameter*> out;
    for (size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
    std::vector<const Parameter*> out;
    for (size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

void Mlp::soft_update_from(const Mlp& source, double tau) {
    if (source.sizes_ != sizes_) throw std::invalid_argument("soft_update_from: architecture mismatch");
    for (size_t l = 0; l < weights_.size(); ++l) {
        weights_[l].value = (1.0 - tau) * weights_[l].value + tau * source.weights_[l].value;
        biases_[l].value = (1.0 - tau) * biases_[l].value + tau * source.biases_[l].value;
    }
}

void Mlp::set_zero() {
    for (auto& w : weights_) w.value.setZero();
    for (auto& b : biases_) b.value.setZero();
}

}  // namespace hlps::nn
