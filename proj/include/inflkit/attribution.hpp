#pragma once

#include <string>
#include <vector>

#include "inflkit/solvers.hpp"
#include "inflkit/types.hpp"

namespace inflkit {

// Influence scores: effect of upweighting a training point on the
// parameters (direction) or on a test-point loss (scalar), plus
// self-influence and the leave-one-out parameter-delta approximation.

// Scalar attribution result for one (train, test) pair. test_index == -1
// marks a self-influence record.
struct InfluenceRecord {
    int train_index = 0;
    int test_index = 0;
    double score = 0.0;
    std::string solver_id;
    double damping = 0.0;
};

struct ParamInfluence {
    int train_index = -1;
    VectorXd direction;
};

// -apply(grad L(z)): first-order parameter response to upweighting z.
ParamInfluence influence_params(const InverseCurvature& solver, const Example& z,
                                int train_index = -1);

// -grad L(z_train)^T apply(grad L(z_test)). The inverse is applied to the
// test gradient so a batch over training points costs one solve; for
// symmetric solvers this equals applying it to the train side.
double influence_loss(const InverseCurvature& solver, const Example& z_train,
                      const Example& z_test);

// Scores against every training point; one solver application total,
// per-point dot products computed in parallel into pre-assigned slots.
VectorXd influence_batch(const InverseCurvature& solver, const Example& z_test,
                         const Dataset& data);

// grad L(z)^T apply(grad L(z)), the positive quadratic form. Stored with
// positive sign so that descending rank surfaces high-influence points.
double self_influence(const InverseCurvature& solver, const Example& z);

std::vector<double> self_influence_all(const InverseCurvature& solver,
                                       const Dataset& data);

// Approximation of (retrained-without-z params) - (params): upweighting by
// -1/n gives (1/n) apply(grad L(z)).
VectorXd loo_delta_approx(const InverseCurvature& solver, const Example& z, int n);

// Indices sorted by descending self-influence, ties broken by ascending index.
std::vector<int> rank_by_self_influence(const InverseCurvature& solver,
                                        const Dataset& data);
std::vector<int> rank_descending(const std::vector<double>& scores);

namespace ref {
// Serial per-point loop; baseline for tests and benchmarks.
VectorXd influence_batch(const InverseCurvature& solver, const Example& z_test,
                         const Dataset& data);
}  // namespace ref

}  // namespace inflkit
