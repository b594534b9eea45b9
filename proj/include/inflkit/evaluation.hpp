#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "inflkit/model.hpp"
#include "inflkit/types.hpp"

namespace inflkit {

// Ground-truth harnesses: subset retraining, the linear datamodeling score,
// and the mislabel-detection protocol with corruption injection.

// One retraining run on a masked subset: which points were kept, the
// retrained parameters, and the losses at the probe test points.
struct SubsetRun {
    std::vector<std::uint8_t> mask;  // length n, 1 = kept
    std::uint64_t seed = 0;
    ModelParams params;
    VectorXd test_losses;  // one entry per probe test point
};

struct LdsConfig {
    int num_subsets = 100;     // M
    double alpha = 0.5;        // subsampling rate in (0,1)
    std::uint64_t subset_seed = 0;
    int test_sample_count = 64;
    std::uint64_t test_seed = 0;

    void validate() const;
};

// Ground truth for mislabel detection: which indices were flipped and how.
struct CorruptionSpec {
    struct Flip {
        int index = 0;
        int old_label = 0;
        int new_label = 0;
    };
    double fraction = 0.0;
    std::uint64_t seed = 0;
    std::vector<Flip> flips;
};

// Trains on the masked examples only (loss normalized by subset size, same
// init seed as the full run). Mask must keep at least one example.
ModelParams retrain_subset(const MlpSpec& spec, const Dataset& data,
                           std::span<const std::uint8_t> mask,
                           const TrainConfig& cfg);

// M masks with exactly ceil(alpha*n) kept entries each, sampled without
// replacement per mask; deterministic in seed.
std::vector<std::vector<std::uint8_t>> sample_subsets(int n, double alpha, int M,
                                                      std::uint64_t seed);

// Spearman rank correlation: Pearson correlation of fractional ranks with
// mean ranks for ties. Throws NumericalError on constant input.
double spearman(std::span<const double> xs, std::span<const double> ys);

// Retrains every mask (subsets run in parallel, each run deterministic) and
// records the per-test-point losses.
std::vector<SubsetRun> run_subset_retrains(const MlpSpec& spec, const Dataset& data,
                                           std::span<const Example> test_points,
                                           const TrainConfig& cfg,
                                           const std::vector<std::vector<std::uint8_t>>& masks);

// Spearman over subsets of (measured test loss, sum of tau over kept points).
double lds_per_sample(std::span<const double> tau,
                      std::span<const SubsetRun> runs, int test_slot);

// tau(z_test) -> per-training-point scores for that test example.
using AttributionFn = std::function<VectorXd(const Example& z_test)>;

struct LdsResult {
    double mean = 0.0;
    std::vector<double> per_test;  // aligned with the sampled test points
};

LdsResult lds(std::span<const Example> test_points, const AttributionFn& attribution,
              std::span<const SubsetRun> runs);

// Draws test_sample_count probe points from the pool without replacement.
std::vector<Example> sample_test_points(const Dataset& pool, int count,
                                        std::uint64_t seed);

// Flips exactly floor(fraction*n) labels, each to a uniformly drawn
// different class; fraction must lie in (0,1).
std::pair<Dataset, CorruptionSpec> corrupt_labels(const Dataset& data,
                                                  double fraction,
                                                  std::uint64_t seed);

// Restores the original labels recorded in the spec.
Dataset restore_labels(const Dataset& corrupted, const CorruptionSpec& spec);

// recall = |corrupted in top ceil(budget*n)| / |corrupted| per budget.
// ranking must be a permutation of 0..n-1; budgets in (0, 1].
std::vector<std::pair<double, double>> detection_curve(
    std::span<const int> ranking, const CorruptionSpec& spec,
    std::span<const double> budgets);

}  // namespace inflkit
