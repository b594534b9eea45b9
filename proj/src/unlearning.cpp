#include "inflkit/unlearning.hpp"

#include "inflkit/model.hpp"

namespace inflkit {

namespace {

void check_index(const Dataset& data, int index) {
    if (index < 0 || index >= data.size())
        throw UsageError("unlearn: index " + std::to_string(index) + " out of range");
}

}  // namespace

ModelParams unlearn_remove(const InverseCurvature& solver, const Dataset& data,
                           const ForgetSet& forget) {
    if (forget.remove.empty())
        throw UsageError("unlearn_remove: forget set is empty");
    const ModelParams& params = solver.model();
    const double inv_n = 1.0 / static_cast<double>(data.size());
    ModelParams updated = params;
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(data.size()), 0);
    for (int index : forget.remove) {
        check_index(data, index);
        if (seen[static_cast<std::size_t>(index)])
            throw UsageError("unlearn_remove: duplicate index " + std::to_string(index));
        seen[static_cast<std::size_t>(index)] = 1;
        updated.theta += inv_n * solver.apply(grad(params, data.at(index)));
    }
    return updated;
}

ModelParams unlearn_relabel(const InverseCurvature& solver, const Dataset& data,
                            const ForgetSet& forget) {
    if (forget.repairs.empty())
        throw UsageError("unlearn_relabel: no repair pairs");
    const ModelParams& params = solver.model();
    const double inv_n = 1.0 / static_cast<double>(data.size());
    ModelParams updated = params;
    for (const auto& repair : forget.repairs) {
        check_index(data, repair.index);
        const Example& z = data.at(repair.index);
        if (repair.new_label == z.label)
            throw UsageError("unlearn_relabel: corrected label equals the original at index " +
                             std::to_string(repair.index));
        if (repair.new_label < 0 || repair.new_label >= data.class_count)
            throw UsageError("unlearn_relabel: corrected label out of range");
        Example repaired = z;
        repaired.label = repair.new_label;
        // Remove the old-label contribution and add the corrected one:
        // removal contributes +apply(grad(z))/n, adding z~ contributes
        // -apply(grad(z~))/n.
        const VectorXd diff = grad(params, z) - grad(params, repaired);
        updated.theta += inv_n * solver.apply(diff);
    }
    return updated;
}

}  // namespace inflkit
