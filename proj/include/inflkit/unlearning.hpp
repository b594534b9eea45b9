#pragma once

#include <vector>

#include "inflkit/solvers.hpp"
#include "inflkit/types.hpp"

namespace inflkit {

// One-shot Newton-update unlearning: push parameters away from the
// contribution of forgotten points (removal) or toward corrected labels
// (repair), using the damped inverse-curvature solver. n is always the
// original training-set size, matching the -1/n upweighting view.

struct ForgetSet {
    struct Repair {
        int index = 0;
        int new_label = 0;
    };
    std::vector<int> remove;      // removal mode
    std::vector<Repair> repairs;  // repair mode
};

// theta + (1/n) * sum over forgotten z of apply(grad L(z)).
ModelParams unlearn_remove(const InverseCurvature& solver, const Dataset& data,
                           const ForgetSet& forget);

// theta + (1/n) * sum of apply(grad L(z) - grad L(z~)): composition of
// removing the old-label point and adding the corrected one. The corrected
// label must differ from the original.
ModelParams unlearn_relabel(const InverseCurvature& solver, const Dataset& data,
                            const ForgetSet& forget);

}  // namespace inflkit
