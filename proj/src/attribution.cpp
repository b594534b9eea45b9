#include "inflkit/attribution.hpp"

#include <algorithm>
#include <numeric>

#include "inflkit/model.hpp"
#include "inflkit/parallel.hpp"

namespace inflkit {

ParamInfluence influence_params(const InverseCurvature& solver, const Example& z,
                                int train_index) {
    VectorXd g = grad(solver.model(), z);
    ParamInfluence out;
    out.train_index = train_index;
    out.direction = -solver.apply(g);
    return out;
}

double influence_loss(const InverseCurvature& solver, const Example& z_train,
                      const Example& z_test) {
    const VectorXd applied = solver.apply(grad(solver.model(), z_test));
    return -grad(solver.model(), z_train).dot(applied);
}

VectorXd influence_batch(const InverseCurvature& solver, const Example& z_test,
                         const Dataset& data) {
    const ModelParams& params = solver.model();
    const VectorXd applied = solver.apply(grad(params, z_test));
    VectorXd scores(data.size());
    par::parallel_slots(static_cast<std::size_t>(data.size()), [&](std::size_t i) {
        scores(static_cast<Eigen::Index>(i)) =
            -grad(params, data.at(static_cast<int>(i))).dot(applied);
    });
    return scores;
}

double self_influence(const InverseCurvature& solver, const Example& z) {
    const VectorXd g = grad(solver.model(), z);
    return g.dot(solver.apply(g));
}

std::vector<double> self_influence_all(const InverseCurvature& solver,
                                       const Dataset& data) {
    std::vector<double> scores(static_cast<std::size_t>(data.size()));
    par::parallel_slots(scores.size(), [&](std::size_t i) {
        scores[i] = self_influence(solver, data.at(static_cast<int>(i)));
    });
    return scores;
}

VectorXd loo_delta_approx(const InverseCurvature& solver, const Example& z, int n) {
    if (n < 1) throw UsageError("loo_delta_approx: n must be >= 1");
    return (-1.0 / static_cast<double>(n)) * influence_params(solver, z).direction;
}

std::vector<int> rank_descending(const std::vector<double>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = scores[static_cast<std::size_t>(a)];
        const double sb = scores[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;  // ties: ascending index
    });
    return order;
}

std::vector<int> rank_by_self_influence(const InverseCurvature& solver,
                                        const Dataset& data) {
    return rank_descending(self_influence_all(solver, data));
}

namespace ref {

VectorXd influence_batch(const InverseCurvature& solver, const Example& z_test,
                         const Dataset& data) {
    const ModelParams& params = solver.model();
    const VectorXd applied = solver.apply(grad(params, z_test));
    VectorXd scores(data.size());
    for (int i = 0; i < data.size(); ++i)
        scores(i) = -grad(params, data.at(i)).dot(applied);
    return scores;
}

}  // namespace ref

}  // namespace inflkit
