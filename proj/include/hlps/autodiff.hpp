#pragma once

// Minimal tape-based reverse-mode differentiation over dense double matrices.
//
// A Tape records every node in creation order, which is already a
// topological order, so backward() is a single reverse sweep. Leaves are
// either constants, free variables (gradient readable from the tape) or
// bound Parameters (gradient accumulated into Parameter::grad).

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hlps::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Trainable tensor with Adam moments.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix m;  // first moment
    Matrix v;  // second moment
    long step = 0;

    Parameter() = default;
    Parameter(std::string n, Matrix init);

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    double scalar() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, int id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var constant(double value);
    Var variable(Matrix value);
    Var param(Parameter& p);

    /// Reverse sweep from a 1x1 root. Parameters bound with param() receive
    /// their gradient contribution in Parameter::grad.
    void backward(const Var& root);

    const Matrix& grad(const Var& v) const;
    const Matrix& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    size_t size() const { return nodes_.size(); }

    /// Smallest distance of any non-smooth op input (relu, norm, min, abs) to
    /// its kink seen while building this tape. Finite-difference checks use it
    /// to reject samples that straddle a kink.
    double kink_margin() const { return kink_margin_; }
    void note_kink(double margin) {
        if (margin < kink_margin_) kink_margin_ = margin;
    }

    // Op construction; backward may be empty for non-differentiable results.
    Var push(Matrix value, std::initializer_list<int> parents, BackwardFn backward);
    void accumulate(int id, const Matrix& g);
    const Matrix& upstream(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    Var make(Node node);

    std::vector<Node> nodes_;
    double kink_margin_ = std::numeric_limits<double>::infinity();
    bool backward_done_ = false;
};

// ---- elementwise / structural ops ----------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var div(const Var& a, const Var& b);  // elementwise
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

/// s * a where s is 1x1.
Var scale_by(const Var& s, const Var& a);
/// a + s where s is 1x1, broadcast to every entry.
Var add_broadcast(const Var& a, const Var& s);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a (n x n) + s * I with s 1x1.
Var add_diag(const Var& a, const Var& s);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var relu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
/// Overflow-safe max(t,0) + log(1 + exp(-|t|)).
Var softplus(const Var& a);
Var minimum(const Var& a, const Var& b);
/// Affine squash into [lo, hi]: lo + (hi - lo) * (tanh(a) + 1) / 2.
Var tanh_range(const Var& a, double lo, double hi);

Var sum(const Var& a);
Var mean(const Var& a);
/// Sum over columns, giving n x 1.
Var row_sum(const Var& a);
/// Euclidean norm of each row, giving n x 1.
Var row_norm(const Var& a);

Var cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_cols(const Var& a, const Var& b);
Var stop_gradient(const Var& a);

/// X = A^{-1} B for symmetric positive definite A, via Cholesky with jitter
/// escalation (none, then 1e-8, 1e-6, 1e-4). Adjoint: B_bar = A^{-1} X_bar,
/// A_bar = -B_bar X^T.
Var cholesky_solve(const Var& a, const Var& b);

/// Factor A + jitter*I, trying the jitter schedule; throws
/// std::runtime_error when every level fails.
Eigen::LLT<Matrix> robust_cholesky(const Matrix& a, double* used_jitter = nullptr);

// ---- optimizer -----------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// A loss or gradient that is NaN or infinite.
class NonFiniteValue : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonFiniteGradient : public NonFiniteValue {
public:
    explicit NonFiniteGradient(const std::string& param)
        : NonFiniteValue("non-finite gradient in parameter '" + param + "'"), name(param) {}
    std::string name;
};

/// One Adam step on each parameter, then clears gradients. Throws
/// NonFiniteGradient before touching any value if a gradient is not finite.
void adam_step(std::span<Parameter* const> params, double lr, const AdamConfig& cfg = {});

void zero_grads(std::span<Parameter* const> params);

}  // namespace hlps::ad
