#pragma once

#include "hlps/autodiff.hpp"
#include "hlps/rng.hpp"

#include <string>
#include <vector>

namespace hlps::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

/// Fully connected ReLU network. Rows of the input are samples; the last
/// layer is linear.
class Mlp {
public:
    Mlp() = default;
    /// sizes = {in, hidden..., out}; weights uniform in +-1/sqrt(fan_in).
    Mlp(std::string name, const std::vector<int>& sizes, Rng& rng);

    /// With bind_params unset the weights enter the tape as constants, so
    /// no gradient reaches this network.
    Var forward(Tape& tape, const Var& x, bool bind_params = true);
    /// Tape-free forward pass for rollouts.
    Matrix forward_value(const Matrix& x) const;

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;

    int in_dim() const { return sizes_.front(); }
    int out_dim() const { return sizes_.back(); }
    const std::vector<int>& sizes() const { return sizes_; }

    /// target <- (1 - tau) * target + tau * source, weights only.
    void soft_update_from(const Mlp& source, double tau);
    void set_zero();

private:
    std::vector<int> sizes_;
    std::vector<Parameter> weights_;
    std::vector<Parameter> biases_;
};

}  // namespace hlps::nn
