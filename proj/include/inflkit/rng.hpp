#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "inflkit/errors.hpp"

namespace inflkit {

// Deterministic random utilities. std::mt19937_64's output sequence is fully
// specified by the standard; the distribution adapters in <random> are not,
// so all sampling methods here are hand-rolled on top of raw 64-bit draws.
// Same seed => same stream on every build of this toolkit.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, stream, index). Used to give
// every sample/subset/layer its own RNG so parallel order cannot matter.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform integer in [0, n). Lemire's multiply-shift with rejection;
    // exact and deterministic.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw UsageError("Rng::below: n must be positive");
        unsigned __int128 m =
            static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // In-place Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // k distinct indices from [0, n), returned in ascending order.
    std::vector<int> choose(int n, int k) {
        if (k < 0 || k > n) throw UsageError("Rng::choose: k out of range");
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        // Partial Fisher-Yates: the first k slots end up with the sample.
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
            std::swap(pool[static_cast<std::size_t>(i)],
                      pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(k));
        std::sort(pool.begin(), pool.end());
        return pool;
    }

    // Index sampled from an unnormalized non-negative weight vector
    // (inverse CDF on a single uniform draw).
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0))
            throw NumericalError("Rng::categorical: weights sum to zero");
        double u = uniform01() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size() - 1);
    }

private:
    std::mt19937_64 engine_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

// Stream ids for the seed derivation; fixed constants so every consumer
// draws from a disjoint stream.
namespace seed_stream {
inline constexpr std::uint64_t kInit = 0x01;
inline constexpr std::uint64_t kTrainShuffle = 0x02;
inline constexpr std::uint64_t kSynthetic = 0x03;
inline constexpr std::uint64_t kPseudoLabel = 0x04;
inline constexpr std::uint64_t kEkfacScale = 0x05;
inline constexpr std::uint64_t kSubsetMask = 0x06;
inline constexpr std::uint64_t kCorruption = 0x07;
inline constexpr std::uint64_t kLissaBatch = 0x08;
inline constexpr std::uint64_t kPowerIter = 0x09;
inline constexpr std::uint64_t kTestSample = 0x0a;
}  // namespace seed_stream

}  // namespace inflkit
