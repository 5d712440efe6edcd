// Timing comparison between the serial reference kernels, their OpenMP
// variants, and the BLAS fast path. Run with no arguments for the default
// sweep, or pass --reps N to change the averaging count.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "sarc/kernels.hpp"
#include "sarc/rng.hpp"

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <class F>
double time_best(int reps, F&& fn) {
    double best = 1e30;
    for (int i = 0; i < reps; ++i) {
        const double t0 = now_s();
        fn();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

void bench_gemm(int n, int reps) {
    sarc::Rng rng(7);
    std::vector<float> a((size_t)n * n), b((size_t)n * n), c((size_t)n * n);
    for (auto& v : a) v = (float)rng.normal();
    for (auto& v : b) v = (float)rng.normal();

    const double flops = 2.0 * n * n * n;
    auto report = [&](const char* name, double sec) {
        std::printf("  gemm %4d  %-8s %8.2f ms  %7.2f GFLOP/s\n", n, name, sec * 1e3,
                    flops / sec / 1e9);
    };
    report("serial", time_best(reps, [&] {
               sarc::kernels::gemm_serial(false, false, n, n, n, 1.0f, a.data(), n, b.data(),
                                          n, 0.0f, c.data(), n);
           }));
    report("omp", time_best(reps, [&] {
               sarc::kernels::gemm_omp(false, false, n, n, n, 1.0f, a.data(), n, b.data(), n,
                                       0.0f, c.data(), n);
           }));
    report("blas", time_best(reps, [&] {
               sarc::kernels::gemm_blas(false, false, n, n, n, 1.0f, a.data(), n, b.data(), n,
                                        0.0f, c.data(), n);
           }));
}

void bench_sobel(int n, int reps) {
    sarc::Rng rng(11);
    std::vector<float> x((size_t)n * n), y((size_t)n * n);
    for (auto& v : x) v = (float)rng.uniform();

    auto report = [&](const char* name, double sec) {
        std::printf("  sobel %4d  %-8s %8.2f ms  %7.2f Mpix/s\n", n, name, sec * 1e3,
                    (double)n * n / sec / 1e6);
    };
    report("serial", time_best(reps, [&] {
               sarc::kernels::sobel_mag_serial(x.data(), n, n, y.data());
           }));
    report("omp", time_best(reps, [&] {
               sarc::kernels::sobel_mag_omp(x.data(), n, n, y.data());
           }));
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 3;
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--reps") && i + 1 < argc) reps = std::atoi(argv[++i]);
    }

    std::printf("gemm (float, best of %d):\n", reps);
    for (int n : {128, 256, 512, 1024}) bench_gemm(n, reps);

    std::printf("sobel magnitude (float, best of %d):\n", reps);
    for (int n : {512, 1024, 2048}) bench_sobel(n, reps);
    return 0;
}
