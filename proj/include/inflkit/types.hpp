#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "inflkit/errors.hpp"

namespace inflkit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kRelu, kTanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// One labeled data point: feature vector and class index.
struct Example {
    VectorXd features;
    int label = 0;
};

struct Dataset {
    std::vector<Example> examples;
    int feature_dim = 0;
    int class_count = 0;

    int size() const { return static_cast<int>(examples.size()); }
    const Example& at(int i) const { return examples[static_cast<std::size_t>(i)]; }

    // n >= 1, consistent feature dims, labels in [0, class_count).
    void validate() const;
};

// Multilayer perceptron shape. Biases are folded into the weights by
// appending a constant-1 coordinate to every layer input, so layer l maps
// (layer_dims[l] + 1) -> layer_dims[l+1] and the Kronecker algebra used by
// the factored curvature treats weights and biases uniformly.
struct MlpSpec {
    std::vector<int> layer_dims;  // [d, h1, ..., C]
    Activation activation = Activation::kRelu;

    int layer_count() const { return static_cast<int>(layer_dims.size()) - 1; }
    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    // Rows of W_l (outputs) and columns (inputs + bias).
    int rows(int l) const { return layer_dims[static_cast<std::size_t>(l) + 1]; }
    int cols(int l) const { return layer_dims[static_cast<std::size_t>(l)] + 1; }

    void validate() const;
    bool operator==(const MlpSpec&) const = default;
};

// Offset of one layer's weight block inside the flat parameter vector.
struct LayerSlice {
    int offset = 0;
    int rows = 0;
    int cols = 0;
    int size() const { return rows * cols; }
};

std::vector<LayerSlice> layer_slices(const MlpSpec& spec);
int param_count(const MlpSpec& spec);

// Flat 64-bit parameter vector plus the structure needed to slice it into
// per-layer matrices. Weight matrices are stored column-major inside theta
// (vec flattens column-by-column), matching the Kronecker conventions used
// throughout the curvature code.
struct ModelParams {
    MlpSpec spec;
    VectorXd theta;
    double l2_penalty = 0.0;  // (l2/2)*||theta||^2 added to every per-sample loss
    std::vector<LayerSlice> slices;

    int param_dim() const { return static_cast<int>(theta.size()); }

    Eigen::Map<const MatrixXd> weight(int l) const {
        const LayerSlice& s = slices[static_cast<std::size_t>(l)];
        return {theta.data() + s.offset, s.rows, s.cols};
    }
    Eigen::Map<MatrixXd> weight(int l) {
        LayerSlice& s = slices[static_cast<std::size_t>(l)];
        return {theta.data() + s.offset, s.rows, s.cols};
    }

    void validate() const;
};

ModelParams make_params(const MlpSpec& spec, double l2_penalty = 0.0);

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 1;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double l2_penalty = 0.0;

    void validate() const;
};

// Per-example forward pass record: activations[l] is the (un-augmented)
// input to layer l and preactivations[l] its output before the nonlinearity.
struct ForwardCache {
    std::vector<VectorXd> activations;     // a_0 .. a_{L-1}
    std::vector<VectorXd> preactivations;  // y_1 .. y_L
};

}  // namespace inflkit
