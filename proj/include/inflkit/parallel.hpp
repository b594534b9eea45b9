#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace inflkit::par {

// All hot loops in this toolkit are data-parallel over samples. Two rules
// keep every result bit-identical no matter how many threads run:
//
//  1. Sums use a fixed chunking of the index space. Each chunk is folded
//     serially in index order into its own buffer, and the chunk buffers are
//     merged in chunk order. The chunk boundaries depend only on
//     (count, dim), never on the thread count, so the floating-point
//     grouping is invariant.
//  2. Per-item outputs are written to pre-assigned slots; no reduction.
//
// A plain serial fold (no chunking) lives in the ref:: namespaces of the
// kernel modules; tests compare it against these kernels within roundoff and
// benchmarks/bench_kernels compares their throughput.

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline constexpr std::size_t kMaxChunks = 128;
inline constexpr std::size_t kChunkBufferBudgetBytes = 256ull << 20;

// Number of chunks used for a deterministic sum. Pure in (count, dim): the
// same inputs always produce the same chunking and therefore the same bits.
inline std::size_t chunk_count(std::size_t count, std::size_t dim) {
    if (count == 0) return 0;
    std::size_t by_budget =
        std::max<std::size_t>(1, kChunkBufferBudgetBytes / (sizeof(double) * std::max<std::size_t>(dim, 1)));
    return std::min({kMaxChunks, count, by_budget});
}

// out[0..dim) = sum over i in [0, count) of the item contributions.
// make_ctx() builds one scratch context per chunk (workspaces, buffers);
// add(i, ctx, acc) must add item i's contribution into acc[0..dim).
template <class MakeCtx, class Add>
void deterministic_sum_ctx(std::size_t count, std::size_t dim, double* out,
                           MakeCtx&& make_ctx, Add&& add) {
    std::memset(out, 0, dim * sizeof(double));
    if (count == 0) return;
    const std::size_t nchunks = chunk_count(count, dim);
    if (nchunks == 1) {
        auto ctx = make_ctx();
        for (std::size_t i = 0; i < count; ++i) add(i, ctx, out);
        return;
    }
    std::vector<double> buffers(nchunks * dim, 0.0);
#pragma omp parallel for schedule(static)
    for (long long c = 0; c < static_cast<long long>(nchunks); ++c) {
        const std::size_t lo = count * static_cast<std::size_t>(c) / nchunks;
        const std::size_t hi = count * (static_cast<std::size_t>(c) + 1) / nchunks;
        double* acc = buffers.data() + static_cast<std::size_t>(c) * dim;
        auto ctx = make_ctx();
        for (std::size_t i = lo; i < hi; ++i) add(i, ctx, acc);
    }
    for (std::size_t c = 0; c < nchunks; ++c) {
        const double* acc = buffers.data() + c * dim;
        for (std::size_t k = 0; k < dim; ++k) out[k] += acc[k];
    }
}

template <class Add>
void deterministic_sum(std::size_t count, std::size_t dim, double* out, Add&& add) {
    deterministic_sum_ctx(
        count, dim, out, [] { return 0; },
        [&add](std::size_t i, int&, double* acc) { add(i, acc); });
}

// Embarrassingly parallel per-item work writing to pre-assigned slots.
template <class Fill>
void parallel_slots(std::size_t count, Fill&& fill) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
        fill(static_cast<std::size_t>(i));
    }
}

}  // namespace inflkit::par
