#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <unistd.h>

#include <Eigen/Dense>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "inflkit/io.hpp"
#include "inflkit/model.hpp"
#include "inflkit/rng.hpp"
#include "inflkit/types.hpp"

namespace testsup {

using inflkit::Dataset;
using inflkit::Example;
using inflkit::MatrixXd;
using inflkit::MlpSpec;
using inflkit::ModelParams;
using inflkit::VectorXd;

// Two-class Gaussians with means +-margin * e1. Small margins keep the
// logistic curvature healthy (no saturated samples), which the convex
// retraining oracles rely on.
inline Dataset two_class_blobs(int n, int d, double margin, std::uint64_t seed) {
    Dataset data;
    data.feature_dim = d;
    data.class_count = 2;
    data.examples.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        inflkit::Rng rng(inflkit::mix_seed(seed, 0x7e57, static_cast<std::uint64_t>(i)));
        Example& z = data.examples[static_cast<std::size_t>(i)];
        z.label = i % 2;
        z.features.resize(d);
        for (int k = 0; k < d; ++k) z.features(k) = rng.normal();
        z.features(0) += z.label == 0 ? -margin : margin;
    }
    return data;
}

inline MlpSpec linear_spec(int d, int classes) {
    MlpSpec spec;
    spec.layer_dims = {d, classes};
    return spec;
}

inline MlpSpec mlp_spec(std::vector<int> dims,
                        inflkit::Activation act = inflkit::Activation::kTanh) {
    MlpSpec spec;
    spec.layer_dims = std::move(dims);
    spec.activation = act;
    return spec;
}

// Central finite difference of the loss; independent oracle for grad().
inline VectorXd fd_grad(const ModelParams& params, const Example& z, double h = 1e-5) {
    VectorXd g(params.param_dim());
    ModelParams probe = params;
    for (int j = 0; j < params.param_dim(); ++j) {
        probe.theta(j) = params.theta(j) + h;
        const double up = inflkit::loss(probe, z);
        probe.theta(j) = params.theta(j) - h;
        const double down = inflkit::loss(probe, z);
        probe.theta(j) = params.theta(j);
        g(j) = (up - down) / (2.0 * h);
    }
    return g;
}

// Central finite difference of the mean gradient along v; independent
// oracle for hvp().
inline VectorXd fd_hvp(const ModelParams& params, const Dataset& data,
                       const VectorXd& v, double h = 1e-6) {
    ModelParams probe = params;
    probe.theta = params.theta + h * v;
    VectorXd up = inflkit::batch_grad(probe, data);
    probe.theta = params.theta - h * v;
    VectorXd down = inflkit::batch_grad(probe, data);
    return (up - down) / (2.0 * h);
}

inline double rel_error(const VectorXd& got, const VectorXd& want) {
    const double scale = want.norm();
    return (got - want).norm() / (scale > 0.0 ? scale : 1.0);
}

inline VectorXd random_vector(int n, std::uint64_t seed) {
    inflkit::Rng rng(seed);
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

inline MatrixXd random_spd(int n, std::uint64_t seed) {
    inflkit::Rng rng(seed);
    MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
    MatrixXd spd = a * a.transpose() / n;
    spd.diagonal().array() += 0.1;
    return spd;
}

inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Fraction of correctly classified examples.
inline double accuracy(const ModelParams& params, const Dataset& data) {
    int hits = 0;
    for (const Example& z : data.examples) {
        VectorXd logits = inflkit::forward_logits(params, z.features);
        Eigen::Index pred;
        logits.maxCoeff(&pred);
        if (static_cast<int>(pred) == z.label) ++hits;
    }
    return static_cast<double>(hits) / data.size();
}

inline double mean_test_loss(const ModelParams& params, const Dataset& data) {
    double total = 0.0;
    for (const Example& z : data.examples) total += inflkit::loss(params, z);
    return total / data.size();
}

// Unique scratch directory under the system temp dir.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("inflkit_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testsup
