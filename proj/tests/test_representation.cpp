#include <doctest.h>

#include "hlps/gp_core.hpp"
#include "hlps/gp_statespace.hpp"
#include "hlps/representation.hpp"
#include "hlps/rng.hpp"

#include <cmath>

using namespace hlps;
using rep::RepresentationModel;

TEST_CASE("normalizer tracks mean and variance") {
    rep::Normalizer n(2);
    Eigen::VectorXd x(2);
    x << 3, -1;
    CHECK(n.apply(x) == x);  // identity before two samples
    n.update(x);
    CHECK(n.apply(x) == x);
    Rng rng(4);
    Eigen::MatrixXd data = rng.normal_matrix(500, 2);
    data.col(0) = data.col(0) * 3.0 + Eigen::VectorXd::Constant(500, 5.0);
    rep::Normalizer m(2);
    for (int i = 0; i < 500; ++i) m.update(data.row(i).transpose());
    const Eigen::RowVectorXd mean = data.colwise().mean();
    CHECK(m.mean()(0) == doctest::Approx(mean(0)).epsilon(1e-12));
    const double var0 = (data.col(0).array() - mean(0)).square().sum() / 500.0;
    const Eigen::MatrixXd z = m.apply_rows(data);
    CHECK(z.col(0).mean() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(z(0, 0) == doctest::Approx((data(0, 0) - mean(0)) / std::sqrt(var0)).epsilon(1e-9));

    // a dimension that has been constant is scaled by the floor, then clipped
    rep::Normalizer c(1);
    for (int i = 0; i < 10; ++i) c.update(Eigen::VectorXd::Constant(1, 3.0));
    CHECK(c.apply(Eigen::VectorXd::Constant(1, 3.01))(0) == doctest::Approx(1.0));
    CHECK(c.apply(Eigen::VectorXd::Constant(1, 9.0))(0) == 5.0);
    CHECK(c.apply(Eigen::VectorXd::Constant(1, -9.0))(0) == -5.0);

    rep::Normalizer r(2);
    r.restore(m.mean(), m.m2(), m.count());
    CHECK(r.apply(x) == m.apply(x));
    CHECK_THROWS(n.update(Eigen::VectorXd::Zero(3)));
}

TEST_CASE("variant names") {
    CHECK(rep::parse_variant("hlps") == rep::Variant::Hlps);
    CHECK(rep::parse_variant("random_projection") == rep::Variant::RandomProjection);
    CHECK(rep::parse_variant("frozen") == rep::Variant::Frozen);
    CHECK_THROWS(rep::parse_variant("other"));
    CHECK(rep::to_string(rep::Variant::RandomProjection) == "random_projection");
}

TEST_CASE("online representation equals the filter over the visited states") {
    Rng rng(11);
    rep::RepresentationConfig cfg;
    cfg.hidden = 12;
    RepresentationModel model(4, cfg, rng);
    const Eigen::MatrixXd states = rng.normal_matrix(15, 4);
    gp::Belief belief = model.initial_belief();
    Eigen::MatrixXd online(15, 2);
    for (int i = 0; i < 15; ++i) online.row(i) = model.phi_online(belief, states.row(i).transpose()).transpose();
    const Eigen::MatrixXd oracle = gp::filter_trajectory(states, model.encode_rows(states), model.hyperparams());
    CHECK((online - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("batch representation is the GP posterior mean of the encoder output") {
    Rng rng(12);
    rep::RepresentationConfig cfg;
    cfg.hidden = 12;
    RepresentationModel model(3, cfg, rng);
    const Eigen::MatrixXd states = rng.normal_matrix(6, 3);
    const Eigen::MatrixXd z = model.phi_batch(states);
    const Eigen::MatrixXd ref = gp::batch_posterior({states, model.encode_rows(states)}, model.hyperparams()).mean;
    CHECK((z - ref).cwiseAbs().maxCoeff() < 1e-12);

    ad::Tape tape;
    const auto v = model.phi_batch(tape, states, true, true);
    CHECK((v.value() - z).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("random projection is linear, GP-free and not trainable") {
    Rng rng(13);
    rep::RepresentationConfig cfg;
    cfg.variant = rep::Variant::RandomProjection;
    RepresentationModel model(3, cfg, rng);
    CHECK_FALSE(model.uses_gp());
    CHECK_FALSE(model.trainable());
    CHECK(model.encoder().sizes() == std::vector<int>{3, 2});
    Eigen::VectorXd a = Eigen::VectorXd::Random(3), b = Eigen::VectorXd::Random(3);
    const Eigen::VectorXd lin = model.encode(a + b) - model.encode(a) - model.encode(b) + model.encode(Eigen::VectorXd::Zero(3));
    CHECK(lin.cwiseAbs().maxCoeff() < 1e-12);
    gp::Belief belief = model.initial_belief();
    CHECK(model.phi_online(belief, a) == model.encode(a));

    ad::Tape tape;
    const auto f = model.encode(tape, a.transpose(), false);
    tape.backward(ad::sum(f));
    for (auto* p : model.encoder_parameters()) CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("frozen keeps the GP layer but is not trainable") {
    Rng rng(14);
    rep::RepresentationConfig cfg;
    cfg.variant = rep::Variant::Frozen;
    RepresentationModel model(3, cfg, rng);
    CHECK(model.uses_gp());
    CHECK_FALSE(model.trainable());
}

TEST_CASE("dimension checks") {
    Rng rng(15);
    RepresentationModel model(3, rep::RepresentationConfig{}, rng);
    CHECK_THROWS(model.encode(Eigen::VectorXd::Zero(4)));
    gp::Belief b = model.initial_belief();
    CHECK_THROWS(model.phi_online(b, Eigen::VectorXd::Zero(2)));
    CHECK_THROWS(model.phi_batch(Eigen::MatrixXd::Zero(2, 5)));
}

TEST_CASE("hyperparameters initialize from the configuration") {
    Rng rng(16);
    rep::RepresentationConfig cfg;
    cfg.init = gp::GpHyperparams::from_natural(2.0, 3.0, 0.5);
    RepresentationModel model(3, cfg, rng);
    CHECK(model.hyperparams().gamma2() == doctest::Approx(2.0));
    CHECK(model.hyperparams().ell() == doctest::Approx(3.0));
    CHECK(model.hyperparams().sigma2() == doctest::Approx(0.5));
    CHECK(model.hyper().name == "gp.log_hyper");
}

TEST_CASE("columns past input_dims do not reach the encoder or the distance") {
    Rng rng(17);
    rep::RepresentationConfig cfg;
    cfg.hidden = 10;
    cfg.input_dims = 4;
    RepresentationModel model(7, cfg, rng);
    CHECK(model.input_dim() == 4);
    Eigen::MatrixXd a = rng.normal_matrix(9, 7);
    for (int i = 0; i < 40; ++i) model.normalizer().update(rng.normal_matrix(1, 7).row(0).transpose());
    Eigen::MatrixXd b = a;
    b.rightCols(3) = rng.normal_matrix(9, 3) * 10.0;
    CHECK((model.phi_batch(a) - model.phi_batch(b)).cwiseAbs().maxCoeff() < 1e-12);
    gp::Belief ba = model.initial_belief(), bb = model.initial_belief();
    for (int i = 0; i < 9; ++i) {
        const auto za = model.phi_online(ba, a.row(i).transpose());
        const auto zb = model.phi_online(bb, b.row(i).transpose());
        CHECK((za - zb).cwiseAbs().maxCoeff() < 1e-12);
    }
    const Eigen::MatrixXd oracle = gp::filter_trajectory(model.inputs(a), model.encode_rows(a), model.hyperparams());
    gp::Belief bc = model.initial_belief();
    for (int i = 0; i < 9; ++i)
        CHECK((model.phi_online(bc, a.row(i).transpose()) - oracle.row(i).transpose()).cwiseAbs().maxCoeff() < 1e-12);

    cfg.input_dims = 8;
    CHECK_THROWS(RepresentationModel(7, cfg, rng));
}
