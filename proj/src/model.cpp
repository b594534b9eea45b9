#include "inflkit/model.hpp"

#include <cmath>
#include <numeric>

#include "inflkit/parallel.hpp"
#include "inflkit/rng.hpp"

namespace inflkit {

namespace {

double act_value(Activation a, double y) {
    return a == Activation::kRelu ? (y > 0.0 ? y : 0.0) : std::tanh(y);
}

// Derivative in terms of preactivation y and activation value v = phi(y).
// The relu derivative at the kink (y == 0) is 0.
double act_deriv(Activation a, double y, double v) {
    if (a == Activation::kRelu) return y > 0.0 ? 1.0 : 0.0;
    return 1.0 - v * v;
}

double act_second_deriv(Activation a, double v) {
    if (a == Activation::kRelu) return 0.0;
    return -2.0 * v * (1.0 - v * v);  // d/dy (1 - tanh^2) with v = tanh(y)
}

// Reusable per-sample buffers: one forward/backward state plus the tangent
// (r_*) counterparts used by curvature products.
struct Workspace {
    const ModelParams* params = nullptr;
    int depth = 0;
    std::vector<VectorXd> aug;       // [input to layer l; 1], size cols(l)
    std::vector<VectorXd> preact;    // y_l, size rows(l)
    std::vector<VectorXd> delta;     // dLoss/dy_l
    std::vector<VectorXd> r_aug;     // tangents of aug (bias entry 0)
    std::vector<VectorXd> r_preact;  // tangents of y_l
    std::vector<VectorXd> r_delta;
    VectorXd probs;

    explicit Workspace(const ModelParams& p) : params(&p), depth(p.spec.layer_count()) {
        aug.resize(static_cast<std::size_t>(depth));
        preact.resize(static_cast<std::size_t>(depth));
        delta.resize(static_cast<std::size_t>(depth));
        r_aug.resize(static_cast<std::size_t>(depth));
        r_preact.resize(static_cast<std::size_t>(depth));
        r_delta.resize(static_cast<std::size_t>(depth));
        for (int l = 0; l < depth; ++l) {
            aug[l].resize(p.spec.cols(l));
            preact[l].resize(p.spec.rows(l));
            delta[l].resize(p.spec.rows(l));
            r_aug[l].resize(p.spec.cols(l));
            r_preact[l].resize(p.spec.rows(l));
            r_delta[l].resize(p.spec.rows(l));
        }
        probs.resize(p.spec.output_dim());
    }

    const VectorXd& logits() const { return preact[static_cast<std::size_t>(depth) - 1]; }

    void run_forward(const VectorXd& x) {
        const MlpSpec& spec = params->spec;
        if (x.size() != spec.input_dim())
            throw UsageError("forward: feature dim " + std::to_string(x.size()) +
                             " does not match model input dim " +
                             std::to_string(spec.input_dim()));
        aug[0].head(spec.input_dim()) = x;
        aug[0](spec.input_dim()) = 1.0;
        for (int l = 0; l < depth; ++l) {
            preact[l].noalias() = params->weight(l) * aug[l];
            if (l + 1 < depth) {
                const int width = spec.rows(l);
                for (int k = 0; k < width; ++k)
                    aug[l + 1](k) = act_value(spec.activation, preact[l](k));
                aug[l + 1](width) = 1.0;
            }
        }
    }

    void run_softmax() {
        // Scalar std::exp: exact underflow to zero on saturated logits
        // (Eigen's packet exp can return subnormals there).
        const VectorXd& y = logits();
        const double m = y.maxCoeff();
        double total = 0.0;
        for (Eigen::Index k = 0; k < y.size(); ++k) {
            probs(k) = std::exp(y(k) - m);
            total += probs(k);
        }
        probs /= total;
    }

    // Fills delta[0..depth-2] from an already-assigned delta[depth-1]
    // (the adjoint of the linearized network; also the exact backward pass).
    void run_backward() {
        const MlpSpec& spec = params->spec;
        for (int l = depth - 1; l > 0; --l) {
            const int width = spec.rows(l - 1);
            VectorXd back = params->weight(l).transpose() * delta[l];
            for (int k = 0; k < width; ++k) {
                const double d =
                    act_deriv(spec.activation, preact[l - 1](k), aug[l](k));
                delta[l - 1](k) = back(k) * d;
            }
        }
    }

    // Jacobian-vector tangent pass: r_preact[depth-1] = J * v.
    void run_tangent(const double* v) {
        const MlpSpec& spec = params->spec;
        r_aug[0].setZero();
        for (int l = 0; l < depth; ++l) {
            Eigen::Map<const MatrixXd> dir(v + params->slices[static_cast<std::size_t>(l)].offset,
                                           spec.rows(l), spec.cols(l));
            r_preact[l].noalias() = dir * aug[l];
            r_preact[l].noalias() += params->weight(l) * r_aug[l];
            if (l + 1 < depth) {
                const int width = spec.rows(l);
                for (int k = 0; k < width; ++k) {
                    const double d =
                        act_deriv(spec.activation, preact[l](k), aug[l + 1](k));
                    r_aug[l + 1](k) = d * r_preact[l](k);
                }
                r_aug[l + 1](width) = 0.0;
            }
        }
    }

    // (diag(p) - p p^T) * t
    VectorXd softmax_curvature(const VectorXd& t) const {
        const double inner = probs.dot(t);
        return (probs.array() * (t.array() - inner)).matrix();
    }

    // Tangent of the backward pass; requires delta, r_preact filled.
    void run_backward_tangent(const double* v) {
        const MlpSpec& spec = params->spec;
        r_delta[static_cast<std::size_t>(depth) - 1] =
            softmax_curvature(r_preact[static_cast<std::size_t>(depth) - 1]);
        for (int l = depth - 1; l > 0; --l) {
            Eigen::Map<const MatrixXd> dir(v + params->slices[static_cast<std::size_t>(l)].offset,
                                           spec.rows(l), spec.cols(l));
            VectorXd rback = dir.transpose() * delta[l];
            rback.noalias() += params->weight(l).transpose() * r_delta[l];
            VectorXd back = params->weight(l).transpose() * delta[l];
            const int width = spec.rows(l - 1);
            for (int k = 0; k < width; ++k) {
                const double value = aug[l](k);
                const double d1 = act_deriv(spec.activation, preact[l - 1](k), value);
                const double d2 = act_second_deriv(spec.activation, value);
                r_delta[l - 1](k) =
                    rback(k) * d1 + back(k) * d2 * r_preact[l - 1](k);
            }
        }
    }

    // acc[block l] += scale * delta_l * aug_l^T for all layers.
    void add_outer_products(const std::vector<VectorXd>& outs, double scale,
                            double* acc) const {
        for (int l = 0; l < depth; ++l) {
            const LayerSlice& s = params->slices[static_cast<std::size_t>(l)];
            Eigen::Map<MatrixXd> block(acc + s.offset, s.rows, s.cols);
            block.noalias() += scale * outs[static_cast<std::size_t>(l)] *
                               aug[static_cast<std::size_t>(l)].transpose();
        }
    }
};

void check_direction(const ModelParams& params, const VectorXd& v) {
    if (v.size() != params.param_dim())
        throw UsageError("curvature product: vector length does not match params");
    if (!v.allFinite())
        throw UsageError("curvature product: non-finite direction vector");
}

std::vector<int> all_indices(const Dataset& data) {
    std::vector<int> idx(static_cast<std::size_t>(data.size()));
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

// Per-sample cross-entropy gradient blocks added into acc.
void add_ce_grad(Workspace& ws, const Example& z, double scale, double* acc) {
    ws.run_forward(z.features);
    ws.run_softmax();
    ws.delta[static_cast<std::size_t>(ws.depth) - 1] = ws.probs;
    ws.delta[static_cast<std::size_t>(ws.depth) - 1](z.label) -= 1.0;
    ws.run_backward();
    ws.add_outer_products(ws.delta, scale, acc);
}

// Per-sample Gauss-Newton product blocks added into acc.
void add_ce_gnh_vp(Workspace& ws, const Example& z, const double* v, double scale,
                   double* acc) {
    ws.run_forward(z.features);
    ws.run_softmax();
    ws.run_tangent(v);
    ws.delta[static_cast<std::size_t>(ws.depth) - 1] =
        ws.softmax_curvature(ws.r_preact[static_cast<std::size_t>(ws.depth) - 1]);
    ws.run_backward();
    ws.add_outer_products(ws.delta, scale, acc);
}

// Per-sample true-Hessian product blocks added into acc:
// d/dt [grad(theta + t v)] at t = 0.
void add_ce_hvp(Workspace& ws, const Example& z, const double* v, double scale,
                double* acc) {
    ws.run_forward(z.features);
    ws.run_softmax();
    ws.run_tangent(v);
    ws.delta[static_cast<std::size_t>(ws.depth) - 1] = ws.probs;
    ws.delta[static_cast<std::size_t>(ws.depth) - 1](z.label) -= 1.0;
    ws.run_backward();
    ws.run_backward_tangent(v);
    ws.add_outer_products(ws.r_delta, scale, acc);
    for (int l = 0; l < ws.depth; ++l) {
        const LayerSlice& s = ws.params->slices[static_cast<std::size_t>(l)];
        Eigen::Map<MatrixXd> block(acc + s.offset, s.rows, s.cols);
        block.noalias() += scale * ws.delta[static_cast<std::size_t>(l)] *
                           ws.r_aug[static_cast<std::size_t>(l)].transpose();
    }
}

}  // namespace

ModelParams init_params(const MlpSpec& spec, std::uint64_t seed) {
    ModelParams params = make_params(spec);
    for (int l = 0; l < spec.layer_count(); ++l) {
        Rng rng(mix_seed(seed, seed_stream::kInit, static_cast<std::uint64_t>(l)));
        const double bound = std::sqrt(6.0 / spec.layer_dims[static_cast<std::size_t>(l)]);
        auto w = params.weight(l);
        for (int c = 0; c + 1 < spec.cols(l); ++c)  // last column is the bias: zero
            for (int r = 0; r < spec.rows(l); ++r) w(r, c) = rng.uniform(-bound, bound);
    }
    return params;
}

std::pair<VectorXd, ForwardCache> forward(const ModelParams& params, const VectorXd& x) {
    Workspace ws(params);
    ws.run_forward(x);
    ForwardCache cache;
    cache.activations.reserve(static_cast<std::size_t>(ws.depth));
    cache.preactivations.reserve(static_cast<std::size_t>(ws.depth));
    for (int l = 0; l < ws.depth; ++l) {
        cache.activations.push_back(
            ws.aug[static_cast<std::size_t>(l)].head(params.spec.cols(l) - 1));
        cache.preactivations.push_back(ws.preact[static_cast<std::size_t>(l)]);
    }
    return {ws.logits(), std::move(cache)};
}

VectorXd forward_logits(const ModelParams& params, const VectorXd& x) {
    Workspace ws(params);
    ws.run_forward(x);
    return ws.logits();
}

double loss(const ModelParams& params, const Example& z) {
    Workspace ws(params);
    ws.run_forward(z.features);
    const VectorXd& y = ws.logits();
    if (z.label < 0 || z.label >= y.size())
        throw UsageError("loss: label out of range");
    const double m = y.maxCoeff();
    double total = 0.0;
    for (Eigen::Index k = 0; k < y.size(); ++k) total += std::exp(y(k) - m);
    const double lse = m + std::log(total);
    double value = lse - y(z.label);
    if (params.l2_penalty > 0.0)
        value += 0.5 * params.l2_penalty * params.theta.squaredNorm();
    return value;
}

VectorXd grad(const ModelParams& params, const Example& z) {
    VectorXd g = VectorXd::Zero(params.param_dim());
    Workspace ws(params);
    add_ce_grad(ws, z, 1.0, g.data());
    if (params.l2_penalty > 0.0) g += params.l2_penalty * params.theta;
    return g;
}

VectorXd batch_grad(const ModelParams& params, const Dataset& data,
                    std::span<const int> indices) {
    if (indices.empty()) throw UsageError("batch_grad: empty index list");
    VectorXd g(params.param_dim());
    const double scale = 1.0 / static_cast<double>(indices.size());
    par::deterministic_sum_ctx(
        indices.size(), static_cast<std::size_t>(params.param_dim()), g.data(),
        [&] { return Workspace(params); },
        [&](std::size_t i, Workspace& ws, double* acc) {
            add_ce_grad(ws, data.at(indices[i]), scale, acc);
        });
    if (params.l2_penalty > 0.0) g += params.l2_penalty * params.theta;
    return g;
}

VectorXd batch_grad(const ModelParams& params, const Dataset& data) {
    auto idx = all_indices(data);
    return batch_grad(params, data, idx);
}

double mean_loss(const ModelParams& params, const Dataset& data) {
    double ce = 0.0;
    par::deterministic_sum_ctx(
        static_cast<std::size_t>(data.size()), 1, &ce,
        [&] { return Workspace(params); },
        [&](std::size_t i, Workspace& ws, double* acc) {
            ws.run_forward(data.at(static_cast<int>(i)).features);
            const VectorXd& y = ws.logits();
            const double m = y.maxCoeff();
            double total = 0.0;
            for (Eigen::Index k = 0; k < y.size(); ++k) total += std::exp(y(k) - m);
            acc[0] += (m + std::log(total) - y(data.at(static_cast<int>(i)).label)) /
                      static_cast<double>(data.size());
        });
    if (params.l2_penalty > 0.0)
        ce += 0.5 * params.l2_penalty * params.theta.squaredNorm();
    return ce;
}

VectorXd hvp(const ModelParams& params, const Dataset& data, const VectorXd& v,
             std::span<const int> indices) {
    check_direction(params, v);
    if (indices.empty()) throw UsageError("hvp: empty index list");
    VectorXd out(params.param_dim());
    const double scale = 1.0 / static_cast<double>(indices.size());
    par::deterministic_sum_ctx(
        indices.size(), static_cast<std::size_t>(params.param_dim()), out.data(),
        [&] { return Workspace(params); },
        [&](std::size_t i, Workspace& ws, double* acc) {
            add_ce_hvp(ws, data.at(indices[i]), v.data(), scale, acc);
        });
    if (params.l2_penalty > 0.0) out += params.l2_penalty * v;
    return out;
}

VectorXd hvp(const ModelParams& params, const Dataset& data, const VectorXd& v) {
    auto idx = all_indices(data);
    return hvp(params, data, v, idx);
}

VectorXd gnh_vp(const ModelParams& params, const Dataset& data, const VectorXd& v,
                std::span<const int> indices) {
    check_direction(params, v);
    if (indices.empty()) throw UsageError("gnh_vp: empty index list");
    VectorXd out(params.param_dim());
    const double scale = 1.0 / static_cast<double>(indices.size());
    par::deterministic_sum_ctx(
        indices.size(), static_cast<std::size_t>(params.param_dim()), out.data(),
        [&] { return Workspace(params); },
        [&](std::size_t i, Workspace& ws, double* acc) {
            add_ce_gnh_vp(ws, data.at(indices[i]), v.data(), scale, acc);
        });
    if (params.l2_penalty > 0.0) out += params.l2_penalty * v;
    return out;
}

VectorXd gnh_vp(const ModelParams& params, const Dataset& data, const VectorXd& v) {
    auto idx = all_indices(data);
    return gnh_vp(params, data, v, idx);
}

int sample_label(const ModelParams& params, const VectorXd& x, std::uint64_t seed) {
    Workspace ws(params);
    ws.run_forward(x);
    ws.run_softmax();
    Rng rng(seed);
    return rng.categorical(std::span<const double>(ws.probs.data(),
                                                   static_cast<std::size_t>(ws.probs.size())));
}

LayerTerms layer_terms_at_label(const ModelParams& params, const VectorXd& x, int label) {
    Workspace ws(params);
    ws.run_forward(x);
    ws.run_softmax();
    if (label < 0 || label >= params.spec.output_dim())
        throw UsageError("layer_terms_at_label: label out of range");
    ws.delta[static_cast<std::size_t>(ws.depth) - 1] = ws.probs;
    ws.delta[static_cast<std::size_t>(ws.depth) - 1](label) -= 1.0;
    ws.run_backward();
    LayerTerms terms;
    terms.inputs = ws.aug;
    terms.preact_grads = ws.delta;
    return terms;
}

VectorXd sample_pseudo_gradient(const ModelParams& params, const VectorXd& x,
                                std::uint64_t seed) {
    const int label = sample_label(params, x, seed);
    LayerTerms terms = layer_terms_at_label(params, x, label);
    VectorXd g = VectorXd::Zero(params.param_dim());
    for (int l = 0; l < params.spec.layer_count(); ++l) {
        const LayerSlice& s = params.slices[static_cast<std::size_t>(l)];
        Eigen::Map<MatrixXd> block(g.data() + s.offset, s.rows, s.cols);
        block.noalias() = terms.preact_grads[static_cast<std::size_t>(l)] *
                          terms.inputs[static_cast<std::size_t>(l)].transpose();
    }
    return g;
}

TrainResult train(const MlpSpec& spec, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    data.validate();
    if (spec.input_dim() != data.feature_dim)
        throw UsageError("train: model input dim does not match dataset");
    if (spec.output_dim() < data.class_count)
        throw UsageError("train: model output dim smaller than class count");

    ModelParams params = init_params(spec, cfg.seed);
    params.l2_penalty = cfg.l2_penalty;

    std::vector<int> perm(static_cast<std::size_t>(data.size()));
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, seed_stream::kTrainShuffle));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(perm);
        for (int start = 0; start < data.size(); start += cfg.batch_size) {
            const int len = std::min(cfg.batch_size, data.size() - start);
            std::span<const int> batch(perm.data() + start, static_cast<std::size_t>(len));
            VectorXd g = batch_grad(params, data, batch);
            params.theta -= cfg.learning_rate * g;
        }
        if (!params.theta.allFinite())
            throw NumericalError("train: parameters diverged at epoch " +
                                 std::to_string(epoch));
    }

    TrainResult result{std::move(params), 0.0};
    result.final_risk = mean_loss(result.params, data);
    if (!std::isfinite(result.final_risk))
        throw NumericalError("train: non-finite final risk after epoch " +
                             std::to_string(cfg.epochs));
    return result;
}

MatrixXd logit_jacobian(const ModelParams& params, const VectorXd& x) {
    const int p = params.param_dim();
    const int classes = params.spec.output_dim();
    Workspace ws(params);
    ws.run_forward(x);
    MatrixXd jac(classes, p);
    for (int c = 0; c < classes; ++c) {
        ws.delta[static_cast<std::size_t>(ws.depth) - 1].setZero();
        ws.delta[static_cast<std::size_t>(ws.depth) - 1](c) = 1.0;
        ws.run_backward();
        VectorXd row = VectorXd::Zero(p);
        ws.add_outer_products(ws.delta, 1.0, row.data());
        jac.row(c) = row.transpose();
    }
    return jac;
}

namespace {

void check_dense_guard(const ModelParams& params) {
    if (params.param_dim() > kDenseOracleMaxParams)
        throw UsageError("dense oracle: p = " + std::to_string(params.param_dim()) +
                         " exceeds the guard of " + std::to_string(kDenseOracleMaxParams));
}

}  // namespace

MatrixXd dense_hessian(const ModelParams& params, const Dataset& data) {
    check_dense_guard(params);
    const int p = params.param_dim();
    MatrixXd h(p, p);
    VectorXd basis = VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) {
        basis(j) = 1.0;
        h.col(j) = hvp(params, data, basis);
        basis(j) = 0.0;
    }
    return h;
}

MatrixXd dense_gnh(const ModelParams& params, const Dataset& data) {
    check_dense_guard(params);
    const int p = params.param_dim();
    const std::size_t dim = static_cast<std::size_t>(p) * static_cast<std::size_t>(p);
    MatrixXd g(p, p);
    const double scale = 1.0 / static_cast<double>(data.size());
    par::deterministic_sum_ctx(
        static_cast<std::size_t>(data.size()), dim, g.data(),
        [&] { return Workspace(params); },
        [&](std::size_t i, Workspace& ws, double* acc) {
            const Example& z = data.at(static_cast<int>(i));
            MatrixXd jac = logit_jacobian(params, z.features);
            ws.run_forward(z.features);
            ws.run_softmax();
            MatrixXd s = ws.probs.asDiagonal();
            s.noalias() -= ws.probs * ws.probs.transpose();
            Eigen::Map<MatrixXd> out(acc, p, p);
            out.noalias() += scale * jac.transpose() * (s * jac);
        });
    if (params.l2_penalty > 0.0) g.diagonal().array() += params.l2_penalty;
    return g;
}

namespace ref {

VectorXd batch_grad(const ModelParams& params, const Dataset& data,
                    std::span<const int> indices) {
    if (indices.empty()) throw UsageError("batch_grad: empty index list");
    VectorXd g = VectorXd::Zero(params.param_dim());
    Workspace ws(params);
    const double scale = 1.0 / static_cast<double>(indices.size());
    for (int idx : indices) add_ce_grad(ws, data.at(idx), scale, g.data());
    if (params.l2_penalty > 0.0) g += params.l2_penalty * params.theta;
    return g;
}

VectorXd gnh_vp(const ModelParams& params, const Dataset& data, const VectorXd& v) {
    check_direction(params, v);
    VectorXd out = VectorXd::Zero(params.param_dim());
    Workspace ws(params);
    const double scale = 1.0 / static_cast<double>(data.size());
    for (int i = 0; i < data.size(); ++i)
        add_ce_gnh_vp(ws, data.at(i), v.data(), scale, out.data());
    if (params.l2_penalty > 0.0) out += params.l2_penalty * v;
    return out;
}

VectorXd hvp(const ModelParams& params, const Dataset& data, const VectorXd& v) {
    check_direction(params, v);
    VectorXd out = VectorXd::Zero(params.param_dim());
    Workspace ws(params);
    const double scale = 1.0 / static_cast<double>(data.size());
    for (int i = 0; i < data.size(); ++i)
        add_ce_hvp(ws, data.at(i), v.data(), scale, out.data());
    if (params.l2_penalty > 0.0) out += params.l2_penalty * v;
    return out;
}

}  // namespace ref

}  // namespace inflkit
