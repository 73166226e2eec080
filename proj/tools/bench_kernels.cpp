// Benchmark: serial reference kernels vs the OpenMP versions, plus the
// event-driven binary drive against the dense path it shortcuts.

#include <chrono>
#include <cstdio>

#include <omp.h>

#include "nvsnn/kernels.hpp"

using namespace nvsnn;
using clk = std::chrono::steady_clock;

namespace {

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto tic = clk::now();
        fn();
        best = std::min(best, std::chrono::duration<double>(clk::now() - tic).count());
    }
    return best;
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    Rng rng(1);

    {
        const std::size_t m = 256, k = 2048, n = 512;
        Tensor<float> A({m, k}), B({n, k});
        fill_uniform(A, rng, -1.0, 1.0);
        fill_uniform(B, rng, -1.0, 1.0);
        Tensor<float> C;
        const double g = 2.0 * m * k * n * 1e-9;
        const double t_ref = time_best_of(3, [&] { ref::matmul_nt(A, B, C); });
        const double t_omp = time_best_of(3, [&] { kernels::matmul_nt(A, B, C); });
        std::printf("matmul_nt %zux%zux%zu   serial %7.1f ms (%5.2f GF/s)   omp %7.1f ms (%5.2f GF/s)   x%.2f\n",
                    m, k, n, t_ref * 1e3, g / t_ref, t_omp * 1e3, g / t_omp, t_ref / t_omp);
    }

    {
        // event-driven drive at a few spike densities
        const std::size_t batch = 50, in = 2312, out = 512;
        Tensor<float> W({out, in});
        fill_uniform(W, rng, -1.0, 1.0);
        for (double density : {0.01, 0.05, 0.2}) {
            Tensor<float> X({batch, in});
            for (auto& v : X.data) v = rng.next_double() < density ? 1.0f : 0.0f;
            Tensor<float> Y;
            const double t_dense = time_best_of(5, [&] { kernels::matmul_nt(X, W, Y); });
            const double t_event = time_best_of(5, [&] { kernels::matmul_nt_binary(X, W, Y); });
            std::printf("binary drive density %4.2f   dense %7.2f ms   event %7.2f ms   x%.1f\n",
                        density, t_dense * 1e3, t_event * 1e3, t_dense / t_event);
        }
    }

    {
        const std::size_t bsz = 16, ci = 64, co = 128, h = 32, w = 32;
        Tensor<float> X({bsz, ci, h, w}), K({co, ci, 3, 3});
        fill_uniform(X, rng, -1.0, 1.0);
        fill_uniform(K, rng, -1.0, 1.0);
        Tensor<float> Y;
        const double g = 2.0 * bsz * co * ci * 9.0 * h * w * 1e-9;
        Tensor<float> Xs({ci, h, w});
        std::copy_n(X.ptr(), Xs.numel(), Xs.ptr());
        Tensor<float> Ys;
        const double t_ref = time_best_of(2, [&] { ref::conv3x3(Xs, K, Ys); }) * bsz;
        const double t_omp = time_best_of(2, [&] { kernels::conv3x3_batch(X, K, Y); });
        std::printf("conv3x3 %zux%zux%zux%zu  serial %7.1f ms (%5.2f GF/s)   omp %7.1f ms (%5.2f GF/s)   x%.2f\n",
                    bsz, co, h, w, t_ref * 1e3, g / t_ref, t_omp * 1e3, g / t_omp, t_ref / t_omp);
    }
    return 0;
}
