#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "inflkit/types.hpp"

namespace inflkit {

// Deterministic training and differentiation engine for MLPs with softmax
// cross-entropy. All batch reductions use the fixed-chunk ordered scheme
// from parallel.hpp, so every result is bit-identical across runs and
// thread counts. ref:: holds plain serial folds for testing and benchmarks.

// Weights uniform in [-sqrt(6/fan_in), +sqrt(6/fan_in)], bias columns zero.
ModelParams init_params(const MlpSpec& spec, std::uint64_t seed);

std::pair<VectorXd, ForwardCache> forward(const ModelParams& params, const VectorXd& x);
VectorXd forward_logits(const ModelParams& params, const VectorXd& x);

// Softmax cross-entropy -log p_y, plus (l2_penalty/2)*||theta||^2 when set.
double loss(const ModelParams& params, const Example& z);

VectorXd grad(const ModelParams& params, const Example& z);

// Mean of per-sample gradients over the given indices, ordered reduction.
VectorXd batch_grad(const ModelParams& params, const Dataset& data,
                    std::span<const int> indices);
VectorXd batch_grad(const ModelParams& params, const Dataset& data);
double mean_loss(const ModelParams& params, const Dataset& data);

// (true Hessian of the mean loss) * v via forward-over-reverse propagation.
VectorXd hvp(const ModelParams& params, const Dataset& data, const VectorXd& v);
VectorXd hvp(const ModelParams& params, const Dataset& data, const VectorXd& v,
             std::span<const int> indices);

// Gauss-Newton curvature product: mean of J_i^T (diag(p_i) - p_i p_i^T) J_i v
// plus the l2 identity term. Positive semidefinite by construction.
VectorXd gnh_vp(const ModelParams& params, const Dataset& data, const VectorXd& v);
VectorXd gnh_vp(const ModelParams& params, const Dataset& data, const VectorXd& v,
                std::span<const int> indices);

// Class index drawn from the model's softmax at x; deterministic in seed.
int sample_label(const ModelParams& params, const VectorXd& x, std::uint64_t seed);

// Gradient of the cross-entropy (no l2 term) at a label sampled from the
// model's own predictive distribution.
VectorXd sample_pseudo_gradient(const ModelParams& params, const VectorXd& x,
                                std::uint64_t seed);

// Per-layer terms of the pseudo-gradient for one example at a fixed label:
// augmented inputs a~_{l-1} and preactivation gradients Dy_l. The layer-l
// gradient block is Dy_l * a~_{l-1}^T.
struct LayerTerms {
    std::vector<VectorXd> inputs;        // a~_{l-1}, length cols(l)
    std::vector<VectorXd> preact_grads;  // Dy_l, length rows(l)
};
LayerTerms layer_terms_at_label(const ModelParams& params, const VectorXd& x,
                                int label);

struct TrainResult {
    ModelParams params;
    double final_risk = 0.0;  // mean training loss at the returned params
};

// Mini-batch SGD with per-epoch deterministic shuffling; same
// (spec, dataset, config) always yields bit-identical parameters.
// Throws NumericalError naming the epoch if the loss goes non-finite.
TrainResult train(const MlpSpec& spec, const Dataset& data, const TrainConfig& cfg);

// Desk-scale dense oracles, guarded to p <= 5000.
inline constexpr int kDenseOracleMaxParams = 5000;
// Assembled column-by-column from hvp(e_j).
MatrixXd dense_hessian(const ModelParams& params, const Dataset& data);
// Assembled from explicit per-sample Jacobians J^T (diag(p) - pp^T) J; an
// independent route from gnh_vp, which the tests cross-check.
MatrixXd dense_gnh(const ModelParams& params, const Dataset& data);

// Parameter-to-logit Jacobian (C x p) of one example; dense oracle helper.
MatrixXd logit_jacobian(const ModelParams& params, const VectorXd& x);

namespace ref {
// Serial reference kernels: straight left-to-right folds over samples with
// no chunking. Used by tests (agreement within roundoff) and by
// benchmarks/bench_kernels as the baseline.
VectorXd batch_grad(const ModelParams& params, const Dataset& data,
                    std::span<const int> indices);
VectorXd gnh_vp(const ModelParams& params, const Dataset& data, const VectorXd& v);
VectorXd hvp(const ModelParams& params, const Dataset& data, const VectorXd& v);
}  // namespace ref

}  // namespace inflkit
