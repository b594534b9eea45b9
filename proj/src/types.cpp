#include "inflkit/types.hpp"

#include <cmath>

namespace inflkit {

std::string activation_name(Activation a) {
    return a == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::kRelu;
    if (name == "tanh") return Activation::kTanh;
    throw UsageError("unknown activation: " + name);
}

void Dataset::validate() const {
    if (examples.empty()) throw UsageError("dataset: must contain at least one example");
    if (class_count < 1) throw UsageError("dataset: class_count must be >= 1");
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const Example& z = examples[i];
        if (z.features.size() != feature_dim)
            throw UsageError("dataset: example " + std::to_string(i) +
                             " has feature dim " + std::to_string(z.features.size()) +
                             ", expected " + std::to_string(feature_dim));
        if (z.label < 0 || z.label >= class_count)
            throw UsageError("dataset: example " + std::to_string(i) +
                             " has label " + std::to_string(z.label) +
                             " outside [0, " + std::to_string(class_count) + ")");
    }
}

void MlpSpec::validate() const {
    if (layer_dims.size() < 2)
        throw UsageError("mlp spec: need at least input and output dims");
    for (int dim : layer_dims)
        if (dim < 1) throw UsageError("mlp spec: layer dims must be positive");
}

std::vector<LayerSlice> layer_slices(const MlpSpec& spec) {
    spec.validate();
    std::vector<LayerSlice> slices;
    slices.reserve(static_cast<std::size_t>(spec.layer_count()));
    int offset = 0;
    for (int l = 0; l < spec.layer_count(); ++l) {
        LayerSlice s{offset, spec.rows(l), spec.cols(l)};
        offset += s.size();
        slices.push_back(s);
    }
    return slices;
}

int param_count(const MlpSpec& spec) {
    int p = 0;
    for (int l = 0; l < spec.layer_count(); ++l) p += spec.rows(l) * spec.cols(l);
    return p;
}

ModelParams make_params(const MlpSpec& spec, double l2_penalty) {
    ModelParams params;
    params.spec = spec;
    params.slices = layer_slices(spec);
    params.theta = VectorXd::Zero(param_count(spec));
    params.l2_penalty = l2_penalty;
    return params;
}

void ModelParams::validate() const {
    spec.validate();
    if (theta.size() != param_count(spec))
        throw UsageError("model params: theta length does not match spec");
    if (!theta.allFinite())
        throw NumericalError("model params: non-finite entries in theta");
    if (l2_penalty < 0.0)
        throw UsageError("model params: l2_penalty must be non-negative");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw UsageError("train config: learning_rate must be positive");
    if (epochs < 0) throw UsageError("train config: epochs must be >= 0");
    if (batch_size < 1) throw UsageError("train config: batch_size must be >= 1");
    if (l2_penalty < 0.0) throw UsageError("train config: l2_penalty must be >= 0");
}

}  // namespace inflkit
