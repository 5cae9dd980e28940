#include "hlps/autodiff.hpp"

#include <cmath>
#include <memory>
#include <sstream>

namespace hlps::ad {

namespace {

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.tape() != b.tape()) throw ShapeError(std::string(op) + ": operands live on different tapes");
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
    }
}

void require_scalar(const char* op, const Var& s) {
    if (s.rows() != 1 || s.cols() != 1) {
        throw ShapeError(std::string(op) + ": expected 1x1 operand, got " + shape_str(s.value()));
    }
}

double softplus_value(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid_value(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

}  // namespace

Parameter::Parameter(std::string n, Matrix init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(Matrix::Zero(value.rows(), value.cols())),
      m(Matrix::Zero(value.rows(), value.cols())),
      v(Matrix::Zero(value.rows(), value.cols())) {}

const Matrix& Var::value() const {
    if (!tape_) throw std::logic_error("Var: unbound handle");
    return tape_->value(id_);
}

double Var::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) throw ShapeError("Var::scalar on " + shape_str(v));
    return v(0, 0);
}

Var Tape::make(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return make(std::move(n));
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::variable(Matrix value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return make(std::move(n));
}

Var Tape::param(Parameter& p) {
    Node n;
    n.value = p.value;
    n.requires_grad = true;
    n.param = &p;
    return make(std::move(n));
}

Var Tape::push(Matrix value, std::initializer_list<int> parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (int p : parents) {
        if (nodes_[static_cast<size_t>(p)].requires_grad) {
            n.requires_grad = true;
            break;
        }
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return make(std::move(n));
}

void Tape::accumulate(int id, const Matrix& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

void Tape::backward(const Var& root) {
    if (root.tape() != this) throw std::logic_error("backward: root belongs to another tape");
    if (root.rows() != 1 || root.cols() != 1) {
        throw ShapeError("backward: root must be 1x1, got " + shape_str(root.value()));
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[static_cast<size_t>(root.id())].requires_grad) return;
    nodes_[static_cast<size_t>(root.id())].grad = Matrix::Ones(1, 1);
    for (int i = root.id(); i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) {
            n.backward(*this, i);
        } else if (n.param) {
            if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
                n.param->grad.setZero(n.value.rows(), n.value.cols());
            }
            n.param->grad += n.grad;
        }
    }
    backward_done_ = true;
}

const Matrix& Tape::grad(const Var& v) const {
    static const Matrix empty;
    const Node& n = nodes_[static_cast<size_t>(v.id())];
    return n.grad.size() == 0 ? empty : n.grad;
}

// ---- ops -------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape("add", a, b);
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self));
        t.accumulate(ib, t.upstream(self));
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape("sub", a, b);
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self));
        t.accumulate(ib, -t.upstream(self));
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape("mul", a, b);
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        t.accumulate(ia, g.cwiseProduct(t.value(ib)));
        t.accumulate(ib, g.cwiseProduct(t.value(ia)));
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape("div", a, b);
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value().cwiseQuotient(b.value()), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        const Matrix& bv = t.value(ib);
        t.accumulate(ia, g.cwiseQuotient(bv));
        t.accumulate(ib, -g.cwiseProduct(t.value(self)).cwiseQuotient(bv));
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
    const int ia = a.id();
    return a.tape()->push(a.value() * c, {ia}, [ia, c](Tape& t, int self) { t.accumulate(ia, t.upstream(self) * c); });
}

Var add_scalar(const Var& a, double c) {
    const int ia = a.id();
    return a.tape()->push(a.value().array() + c, {ia}, [ia](Tape& t, int self) { t.accumulate(ia, t.upstream(self)); });
}

Var scale_by(const Var& s, const Var& a) {
    require_scalar("scale_by", s);
    if (s.tape() != a.tape()) throw ShapeError("scale_by: operands live on different tapes");
    const int is = s.id(), ia = a.id();
    return a.tape()->push(a.value() * s.scalar(), {is, ia}, [is, ia](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        t.accumulate(is, Matrix::Constant(1, 1, g.cwiseProduct(t.value(ia)).sum()));
        t.accumulate(ia, g * t.value(is)(0, 0));
    });
}

Var add_broadcast(const Var& a, const Var& s) {
    require_scalar("add_broadcast", s);
    if (s.tape() != a.tape()) throw ShapeError("add_broadcast: operands live on different tapes");
    const int is = s.id(), ia = a.id();
    return a.tape()->push(a.value().array() + s.scalar(), {ia, is}, [is, ia](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        t.accumulate(ia, g);
        t.accumulate(is, Matrix::Constant(1, 1, g.sum()));
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw ShapeError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " + shape_str(row.value()));
    }
    const int ia = a.id(), ir = row.id();
    Matrix out = a.value();
    out.rowwise() += row.value().row(0);
    return a.tape()->push(std::move(out), {ia, ir}, [ia, ir](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        t.accumulate(ia, g);
        t.accumulate(ir, g.colwise().sum());
    });
}

Var add_diag(const Var& a, const Var& s) {
    require_scalar("add_diag", s);
    if (a.rows() != a.cols()) throw ShapeError("add_diag: square matrix required, got " + shape_str(a.value()));
    const int ia = a.id(), is = s.id();
    Matrix out = a.value();
    out.diagonal().array() += s.scalar();
    return a.tape()->push(std::move(out), {ia, is}, [ia, is](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        t.accumulate(ia, g);
        t.accumulate(is, Matrix::Constant(1, 1, g.trace()));
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ " + shape_str(a.value()) + " * " + shape_str(b.value()));
    }
    const int ia = a.id(), ib = b.id();
    Matrix out = a.value() * b.value();
    return a.tape()->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
        if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
    });
}

Var transpose(const Var& a) {
    const int ia = a.id();
    return a.tape()->push(a.value().transpose(), {ia},
                          [ia](Tape& t, int self) { t.accumulate(ia, t.upstream(self).transpose()); });
}

Var relu(const Var& a) {
    const int ia = a.id();
    a.tape()->note_kink(a.value().cwiseAbs().minCoeff());
    return a.tape()->push(a.value().cwiseMax(0.0), {ia}, [ia](Tape& t, int self) {
        const Matrix mask = (t.value(ia).array() > 0.0).cast<double>().matrix();
        t.accumulate(ia, t.upstream(self).cwiseProduct(mask));
    });
}

Var tanh(const Var& a) {
    const int ia = a.id();
    return a.tape()->push(a.value().array().tanh().matrix(), {ia}, [ia](Tape& t, int self) {
        const Matrix& y = t.value(self);
        t.accumulate(ia, t.upstream(self).cwiseProduct((1.0 - y.array().square()).matrix()));
    });
}

Var exp(const Var& a) {
    const int ia = a.id();
    return a.tape()->push(a.value().array().exp().matrix(), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self).cwiseProduct(t.value(self)));
    });
}

Var log(const Var& a) {
    const int ia = a.id();
    return a.tape()->push(a.value().array().log().matrix(), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self).cwiseQuotient(t.value(ia)));
    });
}

Var sqrt(const Var& a) {
    const int ia = a.id();
    a.tape()->note_kink(a.value().minCoeff());
    return a.tape()->push(a.value().array().sqrt().matrix(), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, (t.upstream(self).array() / (2.0 * t.value(self).array())).matrix());
    });
}

Var square(const Var& a) {
    const int ia = a.id();
    return a.tape()->push(a.value().array().square().matrix(), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, 2.0 * t.upstream(self).cwiseProduct(t.value(ia)));
    });
}

Var softplus(const Var& a) {
    const int ia = a.id();
    return a.tape()->push(a.value().unaryExpr(&softplus_value), {ia}, [ia](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self).cwiseProduct(t.value(ia).unaryExpr(&sigmoid_value)));
    });
}

Var minimum(const Var& a, const Var& b) {
    require_same_shape("minimum", a, b);
    const int ia = a.id(), ib = b.id();
    a.tape()->note_kink((a.value() - b.value()).cwiseAbs().minCoeff());
    return a.tape()->push(a.value().cwiseMin(b.value()), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        const Matrix pick_a = (t.value(ia).array() <= t.value(ib).array()).cast<double>().matrix();
        t.accumulate(ia, g.cwiseProduct(pick_a));
        t.accumulate(ib, g - g.cwiseProduct(pick_a));
    });
}

Var tanh_range(const Var& a, double lo, double hi) {
    const int ia = a.id();
    const double half = 0.5 * (hi - lo);
    Matrix out = (lo + half * (a.value().array().tanh() + 1.0)).matrix();
    return a.tape()->push(std::move(out), {ia}, [ia, half](Tape& t, int self) {
        const auto th = t.value(ia).array().tanh();
        t.accumulate(ia, (t.upstream(self).array() * half * (1.0 - th.square())).matrix());
    });
}

Var sum(const Var& a) {
    const int ia = a.id();
    const Eigen::Index r = a.rows(), c = a.cols();
    return a.tape()->push(Matrix::Constant(1, 1, a.value().sum()), {ia}, [ia, r, c](Tape& t, int self) {
        t.accumulate(ia, Matrix::Constant(r, c, t.upstream(self)(0, 0)));
    });
}

Var mean(const Var& a) {
    if (a.value().size() == 0) throw ShapeError("mean: empty operand");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_sum(const Var& a) {
    const int ia = a.id();
    const Eigen::Index c = a.cols();
    return a.tape()->push(a.value().rowwise().sum(), {ia}, [ia, c](Tape& t, int self) {
        t.accumulate(ia, t.upstream(self).replicate(1, c));
    });
}

Var row_norm(const Var& a) {
    const int ia = a.id();
    Matrix out = a.value().rowwise().norm();
    a.tape()->note_kink(out.size() ? out.minCoeff() : std::numeric_limits<double>::infinity());
    return a.tape()->push(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Matrix& n = t.value(self);
        const Matrix& x = t.value(ia);
        Matrix g(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            // subgradient 0 at the origin
            const double coef = n(i, 0) > 0.0 ? t.upstream(self)(i, 0) / n(i, 0) : 0.0;
            g.row(i) = coef * x.row(i);
        }
        t.accumulate(ia, g);
    });
}

Var cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) {
        throw ShapeError("cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_str(a.value()));
    }
    const int ia = a.id();
    const Eigen::Index r = a.rows(), c = a.cols();
    return a.tape()->push(a.value().middleCols(start, count), {ia}, [ia, r, c, start, count](Tape& t, int self) {
        Matrix g = Matrix::Zero(r, c);
        g.middleCols(start, count) = t.upstream(self);
        t.accumulate(ia, g);
    });
}

Var rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) {
        throw ShapeError("rows: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_str(a.value()));
    }
    const int ia = a.id();
    const Eigen::Index r = a.rows(), c = a.cols();
    return a.tape()->push(a.value().middleRows(start, count), {ia}, [ia, r, c, start, count](Tape& t, int self) {
        Matrix g = Matrix::Zero(r, c);
        g.middleRows(start, count) = t.upstream(self);
        t.accumulate(ia, g);
    });
}

Var concat_cols(const Var& a, const Var& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: row counts differ " + shape_str(a.value()) + " | " + shape_str(b.value()));
    }
    const int ia = a.id(), ib = b.id();
    const Eigen::Index ca = a.cols(), cb = b.cols();
    Matrix out(a.rows(), ca + cb);
    out << a.value(), b.value();
    return a.tape()->push(std::move(out), {ia, ib}, [ia, ib, ca, cb](Tape& t, int self) {
        const Matrix& g = t.upstream(self);
        t.accumulate(ia, g.leftCols(ca));
        t.accumulate(ib, g.rightCols(cb));
    });
}

Var stop_gradient(const Var& a) { return a.tape()->constant(a.value()); }

Eigen::LLT<Matrix> robust_cholesky(const Matrix& a, double* used_jitter) {
    static constexpr double kSchedule[] = {0.0, 1e-8, 1e-6, 1e-4};
    const Eigen::Index n = a.rows();
    for (double jitter : kSchedule) {
        Matrix m = a;
        if (jitter > 0.0) m.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
            if (used_jitter) *used_jitter = jitter;
            return llt;
        }
    }
    throw std::runtime_error("cholesky: matrix of size " + std::to_string(n) +
                             " not positive definite after jitter 1e-4");
}

Var cholesky_solve(const Var& a, const Var& b) {
    if (a.rows() != a.cols() || a.rows() != b.rows()) {
        throw ShapeError("cholesky_solve: incompatible " + shape_str(a.value()) + " \\ " + shape_str(b.value()));
    }
    const int ia = a.id(), ib = b.id();
    auto llt = std::make_shared<Eigen::LLT<Matrix>>(robust_cholesky(a.value()));
    Matrix x = llt->solve(b.value());
    return a.tape()->push(std::move(x), {ia, ib}, [ia, ib, llt](Tape& t, int self) {
        const Matrix b_bar = llt->solve(t.upstream(self));
        t.accumulate(ib, b_bar);
        if (t.requires_grad(ia)) t.accumulate(ia, -b_bar * t.value(self).transpose());
    });
}

// ---- optimizer ---------------------------------------------------------------

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

void adam_step(std::span<Parameter* const> params, double lr, const AdamConfig& cfg) {
    for (const Parameter* p : params) {
        if (p->grad.size() != 0 && !p->grad.allFinite()) throw NonFiniteGradient(p->name);
    }
    for (Parameter* p : params) {
        if (p->grad.size() == 0) p->grad.setZero(p->value.rows(), p->value.cols());
        p->step += 1;
        p->m = cfg.beta1 * p->m + (1.0 - cfg.beta1) * p->grad;
        p->v = cfg.beta2 * p->v + (1.0 - cfg.beta2) * p->grad.cwiseAbs2();
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
        p->value.array() -= lr * (p->m.array() / bc1) / ((p->v.array() / bc2).sqrt() + cfg.eps);
        p->grad.setZero();
    }
}

}  // namespace hlps::ad
