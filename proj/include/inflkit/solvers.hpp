#pragma once

#include <Eigen/Cholesky>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "inflkit/model.hpp"
#include "inflkit/types.hpp"

namespace inflkit {

// Damped inverse-curvature-vector products: exact dense solve, the LiSSA
// truncated Neumann recursion, and the K-FAC / EK-FAC Kronecker
// factorizations, plus calculators for their error bounds.

struct Damping {
    double lambda = 0.0;
    void validate() const;  // lambda > 0
};

struct LissaConfig {
    double alpha = 0.0;       // step size; <= 0 selects 0.9 / (est. max curvature + lambda)
    int iterations = 100;     // J
    int batch_size = 0;       // 0 = full batch
    int repeats = 1;          // independent chains averaged (default: one chain)
    std::uint64_t seed = 0;
    Damping damping;

    void validate() const;
};

// Per-layer uncentered covariances: input_cov = E[a~ a~^T] over layer inputs,
// preact_cov = E[Dy Dy^T] over preactivation pseudo-gradients.
struct KfacState {
    struct Layer {
        MatrixXd input_cov;   // (d_l+1) x (d_l+1)
        MatrixXd preact_cov;  // p_l x p_l
    };
    std::vector<Layer> layers;
    long sample_count = 0;
    double l2_penalty = 0.0;  // copied from the model; folded into damping on apply
};

// Eigenbases of the covariance factors plus variances of the pseudo-gradient
// refit in that basis. eigenvalues is stored column-major over the
// (rows(l) x cols(l)) layer block, matching the vec convention.
struct EkfacState {
    struct Layer {
        MatrixXd input_basis;   // Q_A, orthonormal
        MatrixXd preact_basis;  // Q_Y, orthonormal
        VectorXd eigenvalues;   // fitted Lambda, length rows*cols, >= 0
    };
    std::vector<Layer> layers;
    long sample_count = 0;
    double l2_penalty = 0.0;
};

// Exact (G + lambda I)^{-1} v via Cholesky with one refinement step.
// Requires G symmetric with finite entries; residual < 1e-10 * ||v||.
VectorXd solve_dense(const MatrixXd& curvature, Damping damping, const VectorXd& v);

// One LiSSA chain r_j = v + (I - alpha(apply(r) + lambda r)) ... on an
// arbitrary curvature operator; returns alpha * r_J. Core of lissa_solve,
// exposed so fixtures can drive it with explicit matrices.
VectorXd lissa_recursion(const std::function<VectorXd(const VectorXd&)>& curvature_apply,
                         Damping damping, double alpha, int iterations,
                         const VectorXd& v);

// LiSSA on the model's Gauss-Newton curvature with seeded mini-batch
// estimates (sampling without replacement per pass); full batch when
// batch_size == 0. Throws NumericalError on non-finite iterates or when the
// spectral condition alpha * (max curvature + lambda) < 1 fails.
VectorXd lissa_solve(const ModelParams& params, const Dataset& data,
                     const VectorXd& v, const LissaConfig& cfg);

// Largest eigenvalue estimate of the Gauss-Newton curvature via power
// iteration (the operator is PSD).
double estimate_max_curvature(const ModelParams& params, const Dataset& data,
                              int iterations = 50, std::uint64_t seed = 0);

// ||I - alpha (G + lambda I)||_2 estimate via power iteration on the
// symmetric recursion operator.
double estimate_lissa_opnorm(const ModelParams& params, const Dataset& data,
                             double alpha, Damping damping, int iterations = 100,
                             std::uint64_t seed = 0);

// Covariance fits over the dataset with one sampled pseudo-label per
// example; deterministic in seed and invariant to thread count.
KfacState fit_kfac(const ModelParams& params, const Dataset& data, std::uint64_t seed);
EkfacState fit_ekfac(const ModelParams& params, const Dataset& data, std::uint64_t seed);

// Eigendecomposition step of fit_ekfac, exposed for tests and fixtures;
// adds jitter 1e-12 * trace/dim to each factor before decomposing.
EkfacState ekfac_basis_from_kfac(const KfacState& state);

// Per layer: vec((Y + sqrt(l)I)^{-1} V (A + sqrt(l)I)^{-1}) where
// l = lambda + l2. The sqrt split puts ~l on the Kronecker diagonal.
VectorXd apply_kfac_inverse(const KfacState& state, Damping damping, const VectorXd& v);

// Per layer: project into the Kronecker eigenbasis (never materialized),
// divide by (Lambda_i + lambda + l2), project back.
VectorXd apply_ekfac_inverse(const EkfacState& state, Damping damping, const VectorXd& v);

// alpha * opnorm_m^{J+1} / (1 - opnorm_m) * vnorm; the tail of the truncated
// Neumann series. Throws NumericalError when opnorm_m >= 1 (bound void).
double lissa_error_bound(double alpha, Damping damping, double opnorm_m,
                         int iterations, double vnorm);

// max_i |1/(true_i + lambda) - 1/(fitted_i + lambda)| * vnorm; exact when the
// fitted basis matches the true eigenbasis.
double ekfac_error_bound(const VectorXd& true_eigenvalues,
                         const VectorXd& fitted_eigenvalues, Damping damping,
                         double vnorm);

// Uniform interface over the solver variants. Fitted solvers are immutable;
// apply() is pure and safe to call concurrently.
class InverseCurvature {
public:
    virtual ~InverseCurvature() = default;
    virtual VectorXd apply(const VectorXd& v) const = 0;
    virtual const std::string& id() const = 0;
    virtual double damping() const = 0;
    virtual const ModelParams& model() const = 0;
};

class ExactDenseSolver final : public InverseCurvature {
public:
    ExactDenseSolver(const ModelParams& params, const Dataset& data, Damping damping);
    VectorXd apply(const VectorXd& v) const override;
    const std::string& id() const override { return id_; }
    double damping() const override { return damping_.lambda; }
    const ModelParams& model() const override { return params_; }
    const MatrixXd& curvature() const { return curvature_; }

private:
    const ModelParams& params_;
    Damping damping_;
    MatrixXd curvature_;
    Eigen::LLT<MatrixXd> factorization_;
    std::string id_ = "exact";
};

class LissaSolver final : public InverseCurvature {
public:
    LissaSolver(const ModelParams& params, const Dataset& data, LissaConfig cfg);
    VectorXd apply(const VectorXd& v) const override;
    const std::string& id() const override { return id_; }
    double damping() const override { return cfg_.damping.lambda; }
    const ModelParams& model() const override { return params_; }
    const LissaConfig& config() const { return cfg_; }

private:
    const ModelParams& params_;
    const Dataset& data_;
    LissaConfig cfg_;
    std::string id_ = "lissa";
};

class KfacSolver final : public InverseCurvature {
public:
    KfacSolver(const ModelParams& params, const Dataset& data, Damping damping,
               std::uint64_t seed);
    KfacSolver(const ModelParams& params, KfacState state, Damping damping);
    VectorXd apply(const VectorXd& v) const override;
    const std::string& id() const override { return id_; }
    double damping() const override { return damping_.lambda; }
    const ModelParams& model() const override { return params_; }
    const KfacState& state() const { return state_; }

private:
    const ModelParams& params_;
    KfacState state_;
    Damping damping_;
    std::string id_ = "kfac";
};

class EkfacSolver final : public InverseCurvature {
public:
    EkfacSolver(const ModelParams& params, const Dataset& data, Damping damping,
                std::uint64_t seed);
    EkfacSolver(const ModelParams& params, EkfacState state, Damping damping);
    VectorXd apply(const VectorXd& v) const override;
    const std::string& id() const override { return id_; }
    double damping() const override { return damping_.lambda; }
    const ModelParams& model() const override { return params_; }
    const EkfacState& state() const { return state_; }

private:
    const ModelParams& params_;
    EkfacState state_;
    Damping damping_;
    std::string id_ = "ekfac";
};

}  // namespace inflkit
