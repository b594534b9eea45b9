#include "inflkit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "inflkit/parallel.hpp"
#include "inflkit/rng.hpp"

namespace inflkit {

void LdsConfig::validate() const {
    if (num_subsets < 2) throw UsageError("lds: need at least 2 subsets");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw UsageError("lds: subsampling rate must lie in (0,1)");
    if (test_sample_count < 1) throw UsageError("lds: test_sample_count must be >= 1");
}

ModelParams retrain_subset(const MlpSpec& spec, const Dataset& data,
                           std::span<const std::uint8_t> mask,
                           const TrainConfig& cfg) {
    if (mask.size() != static_cast<std::size_t>(data.size()))
        throw UsageError("retrain_subset: mask length does not match dataset");
    Dataset subset;
    subset.feature_dim = data.feature_dim;
    subset.class_count = data.class_count;
    for (int i = 0; i < data.size(); ++i)
        if (mask[static_cast<std::size_t>(i)]) subset.examples.push_back(data.at(i));
    if (subset.examples.empty())
        throw UsageError("retrain_subset: mask keeps no examples");
    return train(spec, subset, cfg).params;
}

std::vector<std::vector<std::uint8_t>> sample_subsets(int n, double alpha, int M,
                                                      std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw UsageError("sample_subsets: alpha must lie in (0,1)");
    if (n < 1 || M < 1) throw UsageError("sample_subsets: n and M must be positive");
    if (alpha * n < 1.0)
        throw UsageError("sample_subsets: alpha*n below one example");
    const int keep = static_cast<int>(std::ceil(alpha * n));
    std::vector<std::vector<std::uint8_t>> masks(static_cast<std::size_t>(M));
    for (int j = 0; j < M; ++j) {
        Rng rng(mix_seed(seed, seed_stream::kSubsetMask, static_cast<std::uint64_t>(j)));
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
        for (int idx : rng.choose(n, keep)) mask[static_cast<std::size_t>(idx)] = 1;
        masks[static_cast<std::size_t>(j)] = std::move(mask);
    }
    return masks;
}

namespace {

// Fractional ranks with mean ranks for ties (1-based; the base cancels in
// the correlation).
std::vector<double> fractional_ranks(std::span<const double> xs) {
    const std::size_t n = xs.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return xs[static_cast<std::size_t>(a)] < xs[static_cast<std::size_t>(b)]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n &&
               xs[static_cast<std::size_t>(order[j + 1])] == xs[static_cast<std::size_t>(order[i])])
            ++j;
        const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[static_cast<std::size_t>(order[k])] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw NumericalError("spearman: correlation undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size())
        throw UsageError("spearman: input lengths differ");
    if (xs.size() < 2)
        throw UsageError("spearman: need at least two observations");
    const std::vector<double> rx = fractional_ranks(xs);
    const std::vector<double> ry = fractional_ranks(ys);
    return pearson(rx, ry);
}

std::vector<SubsetRun> run_subset_retrains(const MlpSpec& spec, const Dataset& data,
                                           std::span<const Example> test_points,
                                           const TrainConfig& cfg,
                                           const std::vector<std::vector<std::uint8_t>>& masks) {
    std::vector<SubsetRun> runs(masks.size());
    par::parallel_slots(masks.size(), [&](std::size_t j) {
        SubsetRun run;
        run.mask = masks[j];
        run.seed = cfg.seed;
        run.params = retrain_subset(spec, data, run.mask, cfg);
        run.test_losses.resize(static_cast<Eigen::Index>(test_points.size()));
        for (std::size_t t = 0; t < test_points.size(); ++t)
            run.test_losses(static_cast<Eigen::Index>(t)) = loss(run.params, test_points[t]);
        runs[j] = std::move(run);
    });
    return runs;
}

double lds_per_sample(std::span<const double> tau,
                      std::span<const SubsetRun> runs, int test_slot) {
    if (runs.size() < 2) throw UsageError("lds_per_sample: need at least 2 subset runs");
    std::vector<double> measured(runs.size());
    std::vector<double> predicted(runs.size());
    for (std::size_t j = 0; j < runs.size(); ++j) {
        const SubsetRun& run = runs[j];
        if (run.mask.size() != tau.size())
            throw UsageError("lds_per_sample: attribution length does not match masks");
        measured[j] = run.test_losses(test_slot);
        double sum = 0.0;
        for (std::size_t i = 0; i < tau.size(); ++i)
            if (run.mask[i]) sum += tau[i];
        predicted[j] = sum;
    }
    return spearman(measured, predicted);
}

LdsResult lds(std::span<const Example> test_points, const AttributionFn& attribution,
              std::span<const SubsetRun> runs) {
    if (test_points.empty()) throw UsageError("lds: no test points");
    LdsResult result;
    result.per_test.resize(test_points.size());
    for (std::size_t t = 0; t < test_points.size(); ++t) {
        const VectorXd tau = attribution(test_points[t]);
        result.per_test[t] = lds_per_sample(
            std::span<const double>(tau.data(), static_cast<std::size_t>(tau.size())),
            runs, static_cast<int>(t));
    }
    result.mean = std::accumulate(result.per_test.begin(), result.per_test.end(), 0.0) /
                  static_cast<double>(result.per_test.size());
    return result;
}

std::vector<Example> sample_test_points(const Dataset& pool, int count,
                                        std::uint64_t seed) {
    if (count < 1) throw UsageError("sample_test_points: count must be >= 1");
    if (count > pool.size())
        throw UsageError("sample_test_points: count exceeds pool size");
    Rng rng(mix_seed(seed, seed_stream::kTestSample));
    std::vector<Example> points;
    points.reserve(static_cast<std::size_t>(count));
    for (int idx : rng.choose(pool.size(), count)) points.push_back(pool.at(idx));
    return points;
}

std::pair<Dataset, CorruptionSpec> corrupt_labels(const Dataset& data,
                                                  double fraction,
                                                  std::uint64_t seed) {
    data.validate();
    if (data.class_count < 2)
        throw UsageError("corrupt_labels: need at least two classes");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw UsageError("corrupt_labels: fraction must lie in (0,1)");
    const int flips = static_cast<int>(std::floor(fraction * data.size()));

    Dataset corrupted = data;
    CorruptionSpec spec;
    spec.fraction = fraction;
    spec.seed = seed;
    Rng rng(mix_seed(seed, seed_stream::kCorruption));
    for (int idx : rng.choose(data.size(), flips)) {
        const int old_label = data.at(idx).label;
        // Uniform over the other classes, never equal to the original.
        int offset = static_cast<int>(rng.below(static_cast<std::uint64_t>(data.class_count - 1)));
        const int new_label = offset >= old_label ? offset + 1 : offset;
        corrupted.examples[static_cast<std::size_t>(idx)].label = new_label;
        spec.flips.push_back({idx, old_label, new_label});
    }
    return {std::move(corrupted), std::move(spec)};
}

Dataset restore_labels(const Dataset& corrupted, const CorruptionSpec& spec) {
    Dataset restored = corrupted;
    for (const auto& flip : spec.flips) {
        if (flip.index < 0 || flip.index >= restored.size())
            throw UsageError("restore_labels: flip index out of range");
        restored.examples[static_cast<std::size_t>(flip.index)].label = flip.old_label;
    }
    return restored;
}

std::vector<std::pair<double, double>> detection_curve(
    std::span<const int> ranking, const CorruptionSpec& spec,
    std::span<const double> budgets) {
    const std::size_t n = ranking.size();
    std::vector<std::uint8_t> seen(n, 0);
    for (int idx : ranking) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= n || seen[static_cast<std::size_t>(idx)])
            throw UsageError("detection_curve: ranking is not a permutation");
        seen[static_cast<std::size_t>(idx)] = 1;
    }
    if (spec.flips.empty())
        throw UsageError("detection_curve: corruption spec lists no flips");
    std::vector<std::uint8_t> corrupted(n, 0);
    for (const auto& flip : spec.flips) {
        if (flip.index < 0 || static_cast<std::size_t>(flip.index) >= n)
            throw UsageError("detection_curve: flip index out of range");
        corrupted[static_cast<std::size_t>(flip.index)] = 1;
    }

    std::vector<std::pair<double, double>> curve;
    for (double budget : budgets) {
        if (!(budget > 0.0 && budget <= 1.0))
            throw UsageError("detection_curve: budgets must lie in (0,1]");
        const std::size_t top =
            static_cast<std::size_t>(std::ceil(budget * static_cast<double>(n)));
        std::size_t hits = 0;
        for (std::size_t i = 0; i < top && i < n; ++i)
            if (corrupted[static_cast<std::size_t>(ranking[i])]) ++hits;
        curve.emplace_back(budget,
                           static_cast<double>(hits) / static_cast<double>(spec.flips.size()));
    }
    return curve;
}

}  // namespace inflkit
