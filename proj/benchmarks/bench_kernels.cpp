// Times the OpenMP kernels against their serial reference implementations
// on a mid-sized instance. The kernels are bit-deterministic regardless of
// thread count, so the comparison is about throughput only.
//
//   ./bench_kernels [n] [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "inflkit/attribution.hpp"
#include "inflkit/io.hpp"
#include "inflkit/model.hpp"
#include "inflkit/parallel.hpp"
#include "inflkit/solvers.hpp"

using namespace inflkit;

namespace {

template <class Fn>
double time_ms(Fn&& fn, int repeats) {
    // One warmup, then best-of-repeats.
    fn();
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
        best = std::min(best, ms);
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-18s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    const int n = argc > 1 ? std::atoi(argv[1]) : 4000;
    const int threads = argc > 2 ? std::atoi(argv[2]) : par::max_threads();
    par::set_threads(threads);

    MlpSpec spec;
    spec.layer_dims = {64, 32, 10};
    spec.activation = Activation::kTanh;
    Dataset data = generate_synthetic("gaussian_blobs", n, 64, 10, 1);
    ModelParams params = init_params(spec, 2);
    params.l2_penalty = 1e-3;
    std::printf("n = %d, p = %d, threads = %d\n", n, params.param_dim(), threads);

    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    VectorXd v = VectorXd::Ones(params.param_dim());

    report("batch_grad",
           time_ms([&] { (void)ref::batch_grad(params, data, idx); }, 3),
           time_ms([&] { (void)batch_grad(params, data, idx); }, 3));
    report("gnh_vp",
           time_ms([&] { (void)ref::gnh_vp(params, data, v); }, 3),
           time_ms([&] { (void)gnh_vp(params, data, v); }, 3));
    report("hvp",
           time_ms([&] { (void)ref::hvp(params, data, v); }, 3),
           time_ms([&] { (void)hvp(params, data, v); }, 3));

    EkfacSolver solver(params, data, Damping{1e-3}, 3);
    const Example z_test = data.at(0);
    report("influence_batch",
           time_ms([&] { (void)ref::influence_batch(solver, z_test, data); }, 3),
           time_ms([&] { (void)influence_batch(solver, z_test, data); }, 3));

    // Agreement sanity: parallel kernels match the serial fold within roundoff.
    const double drift =
        (batch_grad(params, data, idx) - ref::batch_grad(params, data, idx)).norm();
    std::printf("batch_grad serial/parallel drift: %.3e\n", drift);
    return 0;
}
