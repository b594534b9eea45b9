#include "inflkit/solvers.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numeric>

#include "inflkit/parallel.hpp"
#include "inflkit/rng.hpp"

namespace inflkit {

void Damping::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw UsageError("damping: lambda must be positive and finite");
}

void LissaConfig::validate() const {
    damping.validate();
    if (iterations < 0) throw UsageError("lissa: iterations must be >= 0");
    if (batch_size < 0) throw UsageError("lissa: batch_size must be >= 0");
    if (repeats < 1) throw UsageError("lissa: repeats must be >= 1");
    if (!std::isfinite(alpha)) throw UsageError("lissa: alpha must be finite");
}

VectorXd solve_dense(const MatrixXd& curvature, Damping damping, const VectorXd& v) {
    damping.validate();
    if (curvature.rows() != curvature.cols())
        throw UsageError("solve_dense: curvature matrix must be square");
    if (curvature.rows() != v.size())
        throw UsageError("solve_dense: vector length does not match matrix");
    if (!curvature.allFinite() || !v.allFinite())
        throw UsageError("solve_dense: non-finite input");
    const double scale = std::max(1.0, curvature.cwiseAbs().maxCoeff());
    if ((curvature - curvature.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw UsageError("solve_dense: curvature matrix is not symmetric");

    MatrixXd shifted = curvature;
    shifted.diagonal().array() += damping.lambda;
    Eigen::LLT<MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success)
        throw NumericalError("solve_dense: factorization failed (matrix not PD?)");
    VectorXd x = llt.solve(v);
    // One step of iterative refinement keeps the residual at roundoff level.
    VectorXd residual = v - shifted * x;
    x += llt.solve(residual);
    return x;
}

VectorXd lissa_recursion(const std::function<VectorXd(const VectorXd&)>& curvature_apply,
                         Damping damping, double alpha, int iterations,
                         const VectorXd& v) {
    damping.validate();
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw UsageError("lissa: alpha must be positive");
    if (iterations < 0) throw UsageError("lissa: iterations must be >= 0");
    VectorXd r = v;
    for (int j = 1; j <= iterations; ++j) {
        VectorXd gv = curvature_apply(r);
        r = v + r - alpha * (gv + damping.lambda * r);
        if (!r.allFinite())
            throw NumericalError("lissa: non-finite iterate at iteration " +
                                 std::to_string(j) + " (step size too large?)");
    }
    return alpha * r;
}

double estimate_max_curvature(const ModelParams& params, const Dataset& data,
                              int iterations, std::uint64_t seed) {
    const int p = params.param_dim();
    Rng rng(mix_seed(seed, seed_stream::kPowerIter));
    VectorXd x(p);
    for (int i = 0; i < p; ++i) x(i) = rng.normal();
    x.normalize();
    double estimate = 0.0;
    for (int k = 0; k < iterations; ++k) {
        VectorXd gx = gnh_vp(params, data, x);
        estimate = x.dot(gx);  // Rayleigh quotient; the operator is PSD
        const double norm = gx.norm();
        if (norm == 0.0) return 0.0;
        x = gx / norm;
    }
    return estimate;
}

double estimate_lissa_opnorm(const ModelParams& params, const Dataset& data,
                             double alpha, Damping damping, int iterations,
                             std::uint64_t seed) {
    damping.validate();
    const int p = params.param_dim();
    Rng rng(mix_seed(seed, seed_stream::kPowerIter, 1));
    VectorXd x(p);
    for (int i = 0; i < p; ++i) x(i) = rng.normal();
    x.normalize();
    double estimate = 0.0;
    for (int k = 0; k < iterations; ++k) {
        VectorXd mx = x - alpha * (gnh_vp(params, data, x) + damping.lambda * x);
        estimate = mx.norm();
        if (estimate == 0.0) return 0.0;
        x = mx / estimate;
    }
    return estimate;
}

namespace {

double resolve_alpha(const ModelParams& params, const Dataset& data,
                     const LissaConfig& cfg) {
    const double max_curv = estimate_max_curvature(params, data, 50, cfg.seed);
    if (cfg.alpha > 0.0) {
        if (cfg.alpha * (max_curv + cfg.damping.lambda) >= 1.0)
            throw NumericalError(
                "lissa: spectral condition alpha * (max curvature + lambda) < 1 "
                "violated (estimated " +
                std::to_string(cfg.alpha * (max_curv + cfg.damping.lambda)) + ")");
        return cfg.alpha;
    }
    return 0.9 / (max_curv + cfg.damping.lambda);
}

// Seeded mini-batch sequence: sampling without replacement per pass.
class BatchSequence {
public:
    BatchSequence(int n, int batch_size, std::uint64_t seed)
        : n_(n), batch_size_(batch_size), rng_(mix_seed(seed, seed_stream::kLissaBatch)),
          perm_(static_cast<std::size_t>(n)), pos_(n) {
        std::iota(perm_.begin(), perm_.end(), 0);
    }

    std::span<const int> next() {
        if (pos_ + batch_size_ > n_) {
            rng_.shuffle(perm_);
            pos_ = 0;
        }
        std::span<const int> out(perm_.data() + pos_, static_cast<std::size_t>(batch_size_));
        pos_ += batch_size_;
        return out;
    }

private:
    int n_;
    int batch_size_;
    Rng rng_;
    std::vector<int> perm_;
    int pos_;
};

VectorXd lissa_chain(const ModelParams& params, const Dataset& data,
                     const VectorXd& v, const LissaConfig& cfg, double alpha,
                     std::uint64_t chain_seed) {
    const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= data.size();
    if (full_batch) {
        return lissa_recursion(
            [&](const VectorXd& r) { return gnh_vp(params, data, r); },
            cfg.damping, alpha, cfg.iterations, v);
    }
    BatchSequence batches(data.size(), cfg.batch_size, chain_seed);
    return lissa_recursion(
        [&](const VectorXd& r) { return gnh_vp(params, data, r, batches.next()); },
        cfg.damping, alpha, cfg.iterations, v);
}

}  // namespace

VectorXd lissa_solve(const ModelParams& params, const Dataset& data,
                     const VectorXd& v, const LissaConfig& cfg) {
    cfg.validate();
    if (v.size() != params.param_dim())
        throw UsageError("lissa: vector length does not match params");
    const double alpha = resolve_alpha(params, data, cfg);
    if (cfg.repeats == 1) return lissa_chain(params, data, v, cfg, alpha, cfg.seed);
    VectorXd mean = VectorXd::Zero(v.size());
    for (int c = 0; c < cfg.repeats; ++c) {
        mean += lissa_chain(params, data, v, cfg, alpha,
                            mix_seed(cfg.seed, seed_stream::kLissaBatch, static_cast<std::uint64_t>(c)));
    }
    return mean / static_cast<double>(cfg.repeats);
}

// --- K-FAC / EK-FAC -----------------------------------------------------

namespace {

struct KfacLayout {
    struct Layer {
        std::size_t input_offset = 0;
        std::size_t preact_offset = 0;
        int rows = 0;
        int cols = 0;
    };
    std::vector<Layer> layers;
    std::size_t total = 0;
};

KfacLayout kfac_layout(const MlpSpec& spec) {
    KfacLayout layout;
    std::size_t offset = 0;
    for (int l = 0; l < spec.layer_count(); ++l) {
        KfacLayout::Layer layer;
        layer.rows = spec.rows(l);
        layer.cols = spec.cols(l);
        layer.input_offset = offset;
        offset += static_cast<std::size_t>(layer.cols) * layer.cols;
        layer.preact_offset = offset;
        offset += static_cast<std::size_t>(layer.rows) * layer.rows;
        layout.layers.push_back(layer);
    }
    layout.total = offset;
    return layout;
}

void check_state_vector(const ModelParams& params, const VectorXd& v) {
    if (v.size() != params.param_dim())
        throw UsageError("kronecker apply: vector length does not match params");
}

}  // namespace

KfacState fit_kfac(const ModelParams& params, const Dataset& data, std::uint64_t seed) {
    params.validate();
    data.validate();
    const KfacLayout layout = kfac_layout(params.spec);
    std::vector<double> buffer(layout.total);

    struct Ctx {
        LayerTerms terms;
    };
    par::deterministic_sum_ctx(
        static_cast<std::size_t>(data.size()), layout.total, buffer.data(),
        [] { return Ctx{}; },
        [&](std::size_t i, Ctx& ctx, double* acc) {
            const Example& z = data.at(static_cast<int>(i));
            const int label =
                sample_label(params, z.features, mix_seed(seed, seed_stream::kPseudoLabel, i));
            ctx.terms = layer_terms_at_label(params, z.features, label);
            for (std::size_t l = 0; l < layout.layers.size(); ++l) {
                const auto& lay = layout.layers[l];
                Eigen::Map<MatrixXd> a(acc + lay.input_offset, lay.cols, lay.cols);
                a.noalias() += ctx.terms.inputs[l] * ctx.terms.inputs[l].transpose();
                Eigen::Map<MatrixXd> y(acc + lay.preact_offset, lay.rows, lay.rows);
                y.noalias() += ctx.terms.preact_grads[l] * ctx.terms.preact_grads[l].transpose();
            }
        });

    KfacState state;
    state.sample_count = data.size();
    state.l2_penalty = params.l2_penalty;
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (const auto& lay : layout.layers) {
        KfacState::Layer layer;
        layer.input_cov =
            Eigen::Map<const MatrixXd>(buffer.data() + lay.input_offset, lay.cols, lay.cols) * inv_n;
        layer.preact_cov =
            Eigen::Map<const MatrixXd>(buffer.data() + lay.preact_offset, lay.rows, lay.rows) * inv_n;
        state.layers.push_back(std::move(layer));
    }
    return state;
}

EkfacState ekfac_basis_from_kfac(const KfacState& state) {
    EkfacState out;
    out.sample_count = state.sample_count;
    out.l2_penalty = state.l2_penalty;
    for (const auto& layer : state.layers) {
        auto decompose = [](const MatrixXd& cov) {
            const int dim = static_cast<int>(cov.rows());
            // Jitter keeps the decomposition well posed on rank-deficient
            // covariances (constant activations, saturated outputs).
            const double jitter = 1e-12 * cov.trace() / dim;
            MatrixXd shifted = cov;
            shifted.diagonal().array() += jitter;
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(shifted);
            if (es.info() != Eigen::Success)
                throw NumericalError("ekfac: eigendecomposition failed on a covariance factor");
            return std::make_pair(es.eigenvectors(), es.eigenvalues());
        };
        auto [qa, la] = decompose(layer.input_cov);
        auto [qy, ly] = decompose(layer.preact_cov);
        EkfacState::Layer ek;
        ek.input_basis = std::move(qa);
        ek.preact_basis = std::move(qy);
        // Initialized to the Kronecker eigenvalues Lambda_A (x) Lambda_Y;
        // fit_ekfac refits these from projected pseudo-gradients.
        const int rows = static_cast<int>(ly.size());
        const int cols = static_cast<int>(la.size());
        ek.eigenvalues.resize(static_cast<Eigen::Index>(rows) * cols);
        Eigen::Map<MatrixXd> lam(ek.eigenvalues.data(), rows, cols);
        lam.noalias() = ly.cwiseMax(0.0) * la.cwiseMax(0.0).transpose();
        out.layers.push_back(std::move(ek));
    }
    return out;
}

EkfacState fit_ekfac(const ModelParams& params, const Dataset& data, std::uint64_t seed) {
    EkfacState state = ekfac_basis_from_kfac(fit_kfac(params, data, seed));

    std::size_t total = 0;
    std::vector<std::size_t> offsets;
    for (const auto& layer : state.layers) {
        offsets.push_back(total);
        total += static_cast<std::size_t>(layer.eigenvalues.size());
    }

    // Second pass: per-coordinate variance of the pseudo-gradient in the
    // Kronecker eigenbasis. Each layer term is rank one (Dy a~^T), so the
    // squared projection is an outer product of squared projections.
    std::vector<double> buffer(total);
    struct Ctx {
        LayerTerms terms;
    };
    par::deterministic_sum_ctx(
        static_cast<std::size_t>(data.size()), total, buffer.data(),
        [] { return Ctx{}; },
        [&](std::size_t i, Ctx& ctx, double* acc) {
            const Example& z = data.at(static_cast<int>(i));
            const int label =
                sample_label(params, z.features, mix_seed(seed, seed_stream::kEkfacScale, i));
            ctx.terms = layer_terms_at_label(params, z.features, label);
            for (std::size_t l = 0; l < state.layers.size(); ++l) {
                const auto& layer = state.layers[l];
                VectorXd qy = layer.preact_basis.transpose() * ctx.terms.preact_grads[l];
                VectorXd qa = layer.input_basis.transpose() * ctx.terms.inputs[l];
                Eigen::Map<MatrixXd> lam(acc + offsets[l],
                                         layer.preact_basis.rows(), layer.input_basis.rows());
                lam.noalias() += qy.cwiseAbs2() * qa.cwiseAbs2().transpose();
            }
        });

    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        auto& layer = state.layers[l];
        layer.eigenvalues =
            Eigen::Map<const VectorXd>(buffer.data() + offsets[l], layer.eigenvalues.size()) * inv_n;
    }
    return state;
}

VectorXd apply_kfac_inverse(const KfacState& state, Damping damping, const VectorXd& v) {
    damping.validate();
    // The model curvature includes the exact l2 identity term, so it rides
    // along with the damping here.
    const double shift = std::sqrt(damping.lambda + state.l2_penalty);
    VectorXd out(v.size());
    Eigen::Index offset = 0;
    for (const auto& layer : state.layers) {
        const int rows = static_cast<int>(layer.preact_cov.rows());
        const int cols = static_cast<int>(layer.input_cov.rows());
        if (offset + static_cast<Eigen::Index>(rows) * cols > v.size())
            throw UsageError("apply_kfac_inverse: vector shorter than state layout");
        MatrixXd a = layer.input_cov;
        a.diagonal().array() += shift;
        MatrixXd y = layer.preact_cov;
        y.diagonal().array() += shift;
        Eigen::LLT<MatrixXd> allt(a), yllt(y);
        if (allt.info() != Eigen::Success || yllt.info() != Eigen::Success)
            throw NumericalError("apply_kfac_inverse: factorization failed");
        Eigen::Map<const MatrixXd> block(v.data() + offset, rows, cols);
        MatrixXd left = yllt.solve(block);
        MatrixXd result = allt.solve(left.transpose()).transpose();
        Eigen::Map<MatrixXd>(out.data() + offset, rows, cols) = result;
        offset += static_cast<Eigen::Index>(rows) * cols;
    }
    if (offset != v.size())
        throw UsageError("apply_kfac_inverse: vector length does not match state layout");
    return out;
}

VectorXd apply_ekfac_inverse(const EkfacState& state, Damping damping, const VectorXd& v) {
    damping.validate();
    const double shift = damping.lambda + state.l2_penalty;
    VectorXd out(v.size());
    Eigen::Index offset = 0;
    for (const auto& layer : state.layers) {
        const int rows = static_cast<int>(layer.preact_basis.rows());
        const int cols = static_cast<int>(layer.input_basis.rows());
        if (offset + static_cast<Eigen::Index>(rows) * cols > v.size())
            throw UsageError("apply_ekfac_inverse: vector shorter than state layout");
        Eigen::Map<const MatrixXd> block(v.data() + offset, rows, cols);
        // (Q_A (x) Q_Y)^T vec(V) = vec(Q_Y^T V Q_A); never materialized.
        MatrixXd projected = layer.preact_basis.transpose() * block * layer.input_basis;
        Eigen::Map<const MatrixXd> lam(layer.eigenvalues.data(), rows, cols);
        projected.array() /= (lam.array() + shift);
        Eigen::Map<MatrixXd>(out.data() + offset, rows, cols).noalias() =
            layer.preact_basis * projected * layer.input_basis.transpose();
        offset += static_cast<Eigen::Index>(rows) * cols;
    }
    if (offset != v.size())
        throw UsageError("apply_ekfac_inverse: vector length does not match state layout");
    return out;
}

double lissa_error_bound(double alpha, Damping damping, double opnorm_m,
                         int iterations, double vnorm) {
    damping.validate();
    if (!(alpha > 0.0)) throw UsageError("lissa_error_bound: alpha must be positive");
    if (iterations < 0) throw UsageError("lissa_error_bound: iterations must be >= 0");
    if (opnorm_m < 0.0) throw UsageError("lissa_error_bound: operator norm must be >= 0");
    if (vnorm < 0.0) throw UsageError("lissa_error_bound: vnorm must be >= 0");
    if (opnorm_m >= 1.0)
        throw NumericalError("lissa_error_bound: ||I - alpha(G + lambda I)|| >= 1, bound void");
    return alpha * std::pow(opnorm_m, iterations + 1) / (1.0 - opnorm_m) * vnorm;
}

double ekfac_error_bound(const VectorXd& true_eigenvalues,
                         const VectorXd& fitted_eigenvalues, Damping damping,
                         double vnorm) {
    damping.validate();
    if (true_eigenvalues.size() != fitted_eigenvalues.size())
        throw UsageError("ekfac_error_bound: eigenvalue lists differ in length");
    if (vnorm < 0.0) throw UsageError("ekfac_error_bound: vnorm must be >= 0");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < true_eigenvalues.size(); ++i) {
        const double t = true_eigenvalues(i);
        const double f = fitted_eigenvalues(i);
        if (t < 0.0 || f < 0.0)
            throw UsageError("ekfac_error_bound: eigenvalues must be non-negative");
        worst = std::max(worst, std::abs(1.0 / (t + damping.lambda) -
                                         1.0 / (f + damping.lambda)));
    }
    return worst * vnorm;
}

// --- solver variants -----------------------------------------------------

ExactDenseSolver::ExactDenseSolver(const ModelParams& params, const Dataset& data,
                                   Damping damping)
    : params_(params), damping_(damping) {
    damping_.validate();
    curvature_ = dense_gnh(params, data);
    MatrixXd shifted = curvature_;
    shifted.diagonal().array() += damping_.lambda;
    factorization_.compute(shifted);
    if (factorization_.info() != Eigen::Success)
        throw NumericalError("exact solver: factorization failed");
}

VectorXd ExactDenseSolver::apply(const VectorXd& v) const {
    if (v.size() != curvature_.rows())
        throw UsageError("exact solver: vector length mismatch");
    VectorXd x = factorization_.solve(v);
    VectorXd residual = v - (curvature_ * x + damping_.lambda * x);
    x += factorization_.solve(residual);
    return x;
}

LissaSolver::LissaSolver(const ModelParams& params, const Dataset& data, LissaConfig cfg)
    : params_(params), data_(data), cfg_(cfg) {
    cfg_.validate();
    cfg_.alpha = resolve_alpha(params_, data_, cfg_);
}

VectorXd LissaSolver::apply(const VectorXd& v) const {
    return lissa_solve(params_, data_, v, cfg_);
}

KfacSolver::KfacSolver(const ModelParams& params, const Dataset& data, Damping damping,
                       std::uint64_t seed)
    : params_(params), state_(fit_kfac(params, data, seed)), damping_(damping) {
    damping_.validate();
}

KfacSolver::KfacSolver(const ModelParams& params, KfacState state, Damping damping)
    : params_(params), state_(std::move(state)), damping_(damping) {
    damping_.validate();
}

VectorXd KfacSolver::apply(const VectorXd& v) const {
    check_state_vector(params_, v);
    return apply_kfac_inverse(state_, damping_, v);
}

EkfacSolver::EkfacSolver(const ModelParams& params, const Dataset& data, Damping damping,
                         std::uint64_t seed)
    : params_(params), state_(fit_ekfac(params, data, seed)), damping_(damping) {
    damping_.validate();
}

EkfacSolver::EkfacSolver(const ModelParams& params, EkfacState state, Damping damping)
    : params_(params), state_(std::move(state)), damping_(damping) {
    damping_.validate();
}

VectorXd EkfacSolver::apply(const VectorXd& v) const {
    check_state_vector(params_, v);
    return apply_ekfac_inverse(state_, damping_, v);
}

}  // namespace inflkit
