#include "hlps/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hlps::obj {

LossVariant parse_loss_variant(const std::string& name) {
    if (name == "softplus") return LossVariant::Softplus;
    if (name == "hinge") return LossVariant::Hinge;
    throw std::invalid_argument("unknown loss variant '" + name + "'");
}

std::string to_string(LossVariant v) { return v == LossVariant::Softplus ? "softplus" : "hinge"; }

double triplet_term(double df1, double dfk, double dz1, double dzk, const ObjectiveConfig& cfg) {
    const double gap = dz1 - dzk;
    if (cfg.variant == LossVariant::Hinge) return std::max(gap + cfg.margin, 0.0);
    const double sp = std::max(gap, 0.0) + std::log1p(std::exp(-std::abs(gap)));
    return df1 / (dfk + cfg.eps) * sp;
}

Window make_window(Matrix states, int k, bool episode_end) {
    if (k < 1) throw std::invalid_argument("make_window: k must be >= 1");
    Window w;
    const Eigen::Index n = states.rows();
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
        Eigen::Index q = p + k;
        if (q > n - 1) {
            if (!episode_end) continue;
            q = n - 1;
        }
        w.anchor.push_back(p);
        w.far.push_back(q);
    }
    w.states = std::move(states);
    return w;
}

namespace {

// Rows p of the result are e_{a_p} - e_{b_p}.
Matrix difference_selector(const std::vector<Eigen::Index>& a, const std::vector<Eigen::Index>& b, Eigen::Index n) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(a.size()), n);
    for (size_t p = 0; p < a.size(); ++p) {
        m(static_cast<Eigen::Index>(p), a[p]) += 1.0;
        m(static_cast<Eigen::Index>(p), b[p]) -= 1.0;
    }
    return m;
}

}  // namespace

ad::Var window_loss(ad::Tape& tape, rep::RepresentationModel& model, std::span<const Window> windows,
                    const ObjectiveConfig& cfg, Group trainable) {
    Eigen::Index total_rows = 0, total_triplets = 0;
    for (const auto& w : windows) {
        if (w.states.cols() != model.state_dim()) throw std::invalid_argument("window_loss: state dimension mismatch");
        if (w.anchor.size() != w.far.size()) throw std::invalid_argument("window_loss: malformed window");
        total_rows += w.states.rows();
        total_triplets += static_cast<Eigen::Index>(w.anchor.size());
    }
    if (total_triplets == 0) throw std::invalid_argument("window_loss: no triplets");

    Matrix stacked(total_rows, model.state_dim());
    {
        Eigen::Index r = 0;
        for (const auto& w : windows) {
            stacked.middleRows(r, w.states.rows()) = w.states;
            r += w.states.rows();
        }
    }
    const bool train_enc = trainable != Group::Hyper;
    const bool train_hyp = trainable != Group::Encoder;
    const ad::Var F_all = model.encode(tape, stacked, train_enc);
    gp::HyperVars hv;
    if (model.uses_gp()) hv = gp::split_hyperparams(model.hyper_var(tape, train_hyp));

    ad::Var total;
    Eigen::Index r = 0;
    for (const auto& w : windows) {
        const Eigen::Index n = w.states.rows();
        const ad::Var F = ad::rows(F_all, r, n);
        r += n;
        if (w.anchor.empty()) continue;
        const ad::Var Z = model.uses_gp() ? gp::posterior_mean_var(gp::distance_matrix(model.inputs(w.states)), F, hv) : F;

        std::vector<Eigen::Index> next(w.anchor.size());
        for (size_t p = 0; p < w.anchor.size(); ++p) next[p] = w.anchor[p] + 1;
        const Matrix sel1 = difference_selector(w.anchor, next, n);
        const Matrix selk = difference_selector(w.anchor, w.far, n);
        const ad::Var s1 = tape.constant(sel1), sk = tape.constant(selk);

        const ad::Var dz1 = ad::row_norm(ad::matmul(s1, Z));
        const ad::Var dzk = ad::row_norm(ad::matmul(sk, Z));
        const ad::Var gap = ad::sub(dz1, dzk);

        ad::Var term;
        if (cfg.variant == LossVariant::Hinge) {
            term = ad::sum(ad::relu(ad::add_scalar(gap, cfg.margin)));
        } else if (cfg.ratio_gradient) {
            const ad::Var df1 = ad::row_norm(ad::matmul(s1, F));
            const ad::Var dfk = ad::row_norm(ad::matmul(sk, F));
            term = ad::sum(ad::mul(ad::div(df1, ad::add_scalar(dfk, cfg.eps)), ad::softplus(gap)));
        } else {
            const Matrix& fv = F.value();
            const Vector df1 = (sel1 * fv).rowwise().norm();
            const Vector dfk = (selk * fv).rowwise().norm();
            const Matrix ratio = df1.array() / (dfk.array() + cfg.eps);
            term = ad::sum(ad::mul(tape.constant(ratio), ad::softplus(gap)));
        }
        total = total.valid() ? ad::add(total, term) : term;
    }
    return ad::scale(total, 1.0 / static_cast<double>(total_triplets));
}

ad::Var hlps_loss(ad::Tape& tape, rep::RepresentationModel& model, std::span<const Triplet> batch,
                  const ObjectiveConfig& cfg, Group trainable) {
    if (batch.empty()) throw std::invalid_argument("hlps_loss: empty batch");
    std::vector<Window> windows;
    windows.reserve(batch.size());
    for (size_t b = 0; b < batch.size(); ++b) {
        const Triplet& t = batch[b];
        if (t.episode_i != t.episode_next || t.episode_i != t.episode_k) {
            throw std::invalid_argument("hlps_loss: triplet " + std::to_string(b) + " spans episodes");
        }
        Window w;
        w.states.resize(3, model.state_dim());
        if (t.s_i.size() != model.state_dim() || t.s_next.size() != model.state_dim() ||
            t.s_k.size() != model.state_dim()) {
            throw std::invalid_argument("hlps_loss: state dimension mismatch");
        }
        w.states.row(0) = t.s_i.transpose();
        w.states.row(1) = t.s_next.transpose();
        w.states.row(2) = t.s_k.transpose();
        w.anchor = {0};
        w.far = {2};
        windows.push_back(std::move(w));
    }
    return window_loss(tape, model, windows, cfg, trainable);
}

double hlps_loss_value(rep::RepresentationModel& model, std::span<const Triplet> batch, const ObjectiveConfig& cfg) {
    ad::Tape tape;
    return hlps_loss(tape, model, batch, cfg, Group::Encoder).scalar();
}

std::vector<Triplet> gather_triplets(const rl::ReplayBuffer& buffer, std::span<const rl::TripletIndex> idx) {
    std::vector<Triplet> out;
    out.reserve(idx.size());
    for (const auto& t : idx) {
        out.push_back({buffer.state(t.i), buffer.next_state(t.i), buffer.next_state(t.end), buffer.episode(t.i),
                       buffer.episode(t.i), buffer.episode(t.end)});
    }
    return out;
}

std::optional<double> representation_update(rep::RepresentationModel& model, const rl::ReplayBuffer& buffer,
                                            Group which, const UpdateConfig& ucfg, const ObjectiveConfig& ocfg,
                                            Rng& rng) {
    if (which == Group::Both) throw std::invalid_argument("representation_update: choose one parameter group");
    if (!model.trainable()) return std::nullopt;
    if (which == Group::Encoder) {
        const auto idx = buffer.sample_triplets(ucfg.triplet_batch, ucfg.k, rng);
        if (idx.empty()) return std::nullopt;
        const auto batch = gather_triplets(buffer, idx);
        ad::Tape tape;
        const ad::Var loss = hlps_loss(tape, model, batch, ocfg, Group::Encoder);
        tape.backward(loss);
        const auto params = model.encoder_parameters();
        ad::adam_step(params, ucfg.encoder_lr);
        return loss.scalar();
    }
    const auto idx = buffer.sample_windows(ucfg.window_batch, ucfg.k, ucfg.T, rng);
    std::vector<Window> windows;
    for (const auto& w : idx) {
        Window win = make_window(buffer.window_states(w.start, w.end), ucfg.k, w.episode_end);
        if (!win.anchor.empty()) windows.push_back(std::move(win));
    }
    if (windows.empty()) return std::nullopt;
    ad::Tape tape;
    const ad::Var loss = window_loss(tape, model, windows, ocfg, Group::Hyper);
    tape.backward(loss);
    ad::Parameter* hp = &model.hyper();
    ad::adam_step(std::span<ad::Parameter* const>(&hp, 1), ucfg.hyper_lr);
    return loss.scalar();
}

}  // namespace hlps::obj
