#include <doctest.h>

#include "hlps/autodiff.hpp"
#include "hlps/gradcheck.hpp"
#include "hlps/rng.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

using namespace hlps;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Reduces op output to a scalar through a fixed random projection so every
// output entry contributes to the checked gradient.
double check_op(const Builder& op, std::vector<Matrix> inputs, Rng& rng, bool* kink = nullptr) {
    Matrix proj;
    auto scalar_of = [&](Tape& t, const std::vector<Var>& vars) {
        Var out = op(t, vars);
        if (proj.size() == 0) proj = rng.normal_matrix(out.rows(), out.cols());
        return ad::sum(ad::mul(out, t.constant(proj)));
    };
    Tape tape;
    std::vector<Var> vars;
    for (auto& m : inputs) vars.push_back(tape.variable(m));
    Var root = scalar_of(tape, vars);
    tape.backward(root);
    if (kink) *kink = tape.kink_margin() < 1e-3;
    double worst = 0.0;
    for (size_t k = 0; k < inputs.size(); ++k) {
        auto f = [&]() {
            Tape t;
            std::vector<Var> vs;
            for (auto& m : inputs) vs.push_back(t.constant(m));
            return scalar_of(t, vs).scalar();
        };
        const Matrix num = check::numeric_gradient(f, inputs[k], 1e-5);
        Matrix ana = tape.grad(vars[k]);
        if (ana.size() == 0) ana = Matrix::Zero(num.rows(), num.cols());
        worst = std::max(worst, check::relative_error(ana, num));
    }
    return worst;
}


}  // namespace

TEST_CASE("forward values") {
    Tape t;
    Var x = t.variable(Matrix::Constant(1, 1, 3.0));
    CHECK(ad::square(x).scalar() == doctest::Approx(9.0));
    CHECK(ad::softplus(t.constant(0.0)).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    Matrix a(1, 2), b(1, 2);
    a << 1, 0;
    b << 0, 0;
    CHECK(ad::row_norm(ad::sub(t.constant(a), t.constant(b))).scalar() == doctest::Approx(1.0));
}

TEST_CASE("softplus is overflow safe") {
    Tape t;
    Matrix x(1, 3);
    x << -800.0, 0.0, 800.0;
    Var y = ad::softplus(t.variable(x));
    CHECK(y.value().allFinite());
    CHECK(y.value()(0, 2) == doctest::Approx(800.0));
    CHECK(y.value()(0, 0) >= 0.0);
}

TEST_CASE("backward on elementary functions") {
    {
        Tape t;
        Var x = t.variable(Matrix::Constant(1, 1, 3.0));
        t.backward(ad::square(x));
        CHECK(t.grad(x)(0, 0) == doctest::Approx(6.0));
    }
    {
        Tape t;
        Var x = t.variable(Matrix::Constant(1, 1, 0.0));
        t.backward(ad::softplus(x));
        CHECK(t.grad(x)(0, 0) == doctest::Approx(0.5));
    }
}

TEST_CASE("log(1+exp(a-b)) matches central differences") {
    Rng rng(11);
    for (int c = 0; c < 20; ++c) {
        Matrix a = Matrix::Constant(1, 1, rng.uniform(-5, 5));
        Matrix b = Matrix::Constant(1, 1, rng.uniform(-5, 5));
        const double err = check_op(
            [](Tape&, const std::vector<Var>& v) { return ad::log(ad::add_scalar(ad::exp(ad::sub(v[0], v[1])), 1.0)); },
            {a, b}, rng);
        CHECK(err < 1e-5);
    }
}

TEST_CASE("backward requires a scalar root") {
    Tape t;
    Var x = t.variable(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(ad::square(x)), ad::ShapeError);
}

TEST_CASE("shape mismatch is a construction-time error") {
    Tape t;
    Var a = t.variable(Matrix::Ones(2, 3));
    Var b = t.variable(Matrix::Ones(3, 2));
    CHECK_THROWS_AS(ad::add(a, b), ad::ShapeError);
    CHECK_THROWS_AS(ad::matmul(a, a), ad::ShapeError);
    CHECK_THROWS_AS(ad::add_row(a, t.variable(Matrix::Ones(1, 2))), ad::ShapeError);
    CHECK_THROWS_AS(ad::cols(a, 2, 2), ad::ShapeError);
}

TEST_CASE("every differentiable op matches finite differences on random inputs") {
    struct OpCase {
        std::string name;
        Builder fn;
        std::function<std::vector<Matrix>(Rng&)> inputs;
    };
    auto two = [](int r, int c) {
        return [r, c](Rng& g) { return std::vector<Matrix>{g.normal_matrix(r, c), g.normal_matrix(r, c)}; };
    };
    auto one = [](int r, int c) { return [r, c](Rng& g) { return std::vector<Matrix>{g.normal_matrix(r, c)}; }; };
    auto positive = [](int r, int c) {
        return [r, c](Rng& g) {
            Matrix m(r, c);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g.uniform(0.5, 3.0);
            return std::vector<Matrix>{m};
        };
    };
    std::vector<OpCase> cases = {
        {"add", [](Tape&, auto& v) { return ad::add(v[0], v[1]); }, two(3, 2)},
        {"sub", [](Tape&, auto& v) { return ad::sub(v[0], v[1]); }, two(3, 2)},
        {"mul", [](Tape&, auto& v) { return ad::mul(v[0], v[1]); }, two(3, 2)},
        {"div", [](Tape&, auto& v) { return ad::div(v[0], ad::add_scalar(ad::square(v[1]), 0.5)); }, two(3, 2)},
        {"scale", [](Tape&, auto& v) { return ad::scale(v[0], -2.5); }, one(2, 2)},
        {"scale_by", [](Tape&, auto& v) { return ad::scale_by(ad::cols(ad::rows(v[0], 0, 1), 0, 1), v[0]); }, one(3, 3)},
        {"add_broadcast", [](Tape&, auto& v) { return ad::add_broadcast(v[0], ad::cols(ad::rows(v[0], 1, 1), 1, 1)); },
         one(3, 2)},
        {"add_row", [](Tape&, auto& v) { return ad::add_row(v[0], ad::rows(v[1], 0, 1)); }, two(4, 3)},
        {"add_diag", [](Tape&, auto& v) { return ad::add_diag(v[0], ad::cols(ad::rows(v[1], 0, 1), 0, 1)); }, two(3, 3)},
        {"matmul", [](Tape&, auto& v) { return ad::matmul(v[0], ad::transpose(v[1])); }, two(3, 4)},
        {"relu", [](Tape&, auto& v) { return ad::relu(v[0]); }, one(4, 3)},
        {"tanh", [](Tape&, auto& v) { return ad::tanh(v[0]); }, one(4, 3)},
        {"exp", [](Tape&, auto& v) { return ad::exp(v[0]); }, one(3, 3)},
        {"log", [](Tape&, auto& v) { return ad::log(v[0]); }, positive(3, 3)},
        {"sqrt", [](Tape&, auto& v) { return ad::sqrt(v[0]); }, positive(3, 3)},
        {"square", [](Tape&, auto& v) { return ad::square(v[0]); }, one(3, 3)},
        {"softplus", [](Tape&, auto& v) { return ad::softplus(ad::scale(v[0], 4.0)); }, one(3, 3)},
        {"minimum", [](Tape&, auto& v) { return ad::minimum(v[0], v[1]); }, two(4, 2)},
        {"tanh_range", [](Tape&, auto& v) { return ad::tanh_range(v[0], -20.0, 2.0); }, one(3, 2)},
        {"sum", [](Tape&, auto& v) { return ad::sum(v[0]); }, one(3, 2)},
        {"mean", [](Tape&, auto& v) { return ad::mean(v[0]); }, one(3, 2)},
        {"row_sum", [](Tape&, auto& v) { return ad::row_sum(v[0]); }, one(3, 4)},
        {"row_norm", [](Tape&, auto& v) { return ad::row_norm(v[0]); }, one(5, 3)},
        {"cols", [](Tape&, auto& v) { return ad::cols(v[0], 1, 2); }, one(3, 4)},
        {"rows", [](Tape&, auto& v) { return ad::rows(v[0], 1, 2); }, one(4, 3)},
        {"concat_cols", [](Tape&, auto& v) { return ad::concat_cols(v[0], v[1]); }, two(3, 2)},
        {"cholesky_solve",
         [](Tape&, auto& v) {
             Var a = ad::add_diag(ad::matmul(v[0], ad::transpose(v[0])), v[0].tape()->constant(4.0));
             return ad::cholesky_solve(a, v[1]);
         },
         two(4, 4)},
    };
    Rng rng(2024);
    for (const auto& c : cases) {
        CAPTURE(c.name);
        int checked = 0;
        double worst = 0.0;
        for (int trial = 0; checked < 100 && trial < 400; ++trial) {
            bool kink = false;
            const double err = check_op(c.fn, c.inputs(rng), rng, &kink);
            if (kink) continue;  // finite differences are invalid across a kink
            worst = std::max(worst, err);
            ++checked;
        }
        CHECK(checked == 100);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("cholesky_solve escalates jitter on singular input and reports failure") {
    Rng rng(3);
    Tape t;
    Matrix ones = Matrix::Ones(3, 3);  // rank one
    Var x = ad::cholesky_solve(t.constant(ones), t.constant(Matrix::Ones(3, 1)));
    CHECK(x.value().allFinite());
    Matrix neg = -Matrix::Identity(2, 2);
    CHECK_THROWS_AS(ad::cholesky_solve(t.constant(neg), t.constant(Matrix::Ones(2, 1))), std::runtime_error);
    (void)rng;
}

TEST_CASE("backward is deterministic") {
    auto run = [] {
        Rng rng(77);
        Tape t;
        Var a = t.variable(rng.normal_matrix(8, 5));
        Var w = t.variable(rng.normal_matrix(5, 3));
        Var y = ad::sum(ad::softplus(ad::matmul(ad::relu(a), w)));
        t.backward(y);
        return std::pair{t.grad(a), t.grad(w)};
    };
    auto [a1, w1] = run();
    auto [a2, w2] = run();
    CHECK((a1.array() == a2.array()).all());
    CHECK((w1.array() == w2.array()).all());
}

TEST_CASE("parameters accumulate gradient through the tape") {
    ad::Parameter p("p", Matrix::Constant(1, 1, 3.0));
    Tape t;
    Var x = t.param(p);
    t.backward(ad::add(ad::square(x), ad::scale(x, 2.0)));
    CHECK(p.grad(0, 0) == doctest::Approx(8.0));
}

TEST_CASE("adam step") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        ad::Parameter p("p", Matrix::Constant(2, 2, 1.5));
        std::vector<ad::Parameter*> ps{&p};
        ad::adam_step(ps, 0.1);
        ad::adam_step(ps, 0.1);
        CHECK((p.value.array() == 1.5).all());
    }
    SUBCASE("first step moves by lr * sign(g)") {
        Matrix init(1, 3);
        init << 1.0, -2.0, 0.5;
        ad::Parameter p("p", init);
        p.grad << 3.0, -0.01, 250.0;
        std::vector<ad::Parameter*> ps{&p};
        ad::adam_step(ps, 0.01);
        CHECK(p.value(0, 0) == doctest::Approx(0.99).epsilon(1e-6));
        CHECK(p.value(0, 1) == doctest::Approx(-1.99).epsilon(1e-4));
        CHECK(p.value(0, 2) == doctest::Approx(0.49).epsilon(1e-6));
        CHECK((p.grad.array() == 0.0).all());
        CHECK(p.step == 1);
    }
    SUBCASE("converges on a convex quadratic") {
        ad::Parameter x("x", Matrix::Zero(1, 1));
        std::vector<ad::Parameter*> ps{&x};
        for (int i = 0; i < 100; ++i) {
            Tape t;
            t.backward(ad::square(ad::add_scalar(t.param(x), -2.0)));
            ad::adam_step(ps, 0.1);
        }
        CHECK(std::abs(x.value(0, 0) - 2.0) < 0.05);
    }
    SUBCASE("non-finite gradient names the parameter") {
        ad::Parameter p("encoder.w0", Matrix::Zero(1, 1));
        p.grad(0, 0) = std::nan("");
        std::vector<ad::Parameter*> ps{&p};
        try {
            ad::adam_step(ps, 0.1);
            FAIL("expected throw");
        } catch (const ad::NonFiniteGradient& e) {
            CHECK(e.name == "encoder.w0");
            CHECK(p.value(0, 0) == 0.0);
        }
    }
}
