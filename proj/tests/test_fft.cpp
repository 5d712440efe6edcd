#include <complex>
#include <vector>

#include "doctest.h"
#include "sarc/errors.hpp"
#include "sarc/fft.hpp"
#include "sarc/rng.hpp"
#include "testutil.hpp"

using namespace sarc;
using fft::cd;

namespace {

Tensor<double> random_window(int n, Rng& rng) {
    Tensor<double> w({n, n});
    for (auto& v : w.v) v = rng.uniform(-1.0, 1.0);
    return w;
}

}  // namespace

TEST_SUITE("fft") {

TEST_CASE("radix-2 transform inverts itself") {
    Rng rng(1);
    std::vector<cd> a(64), orig;
    for (auto& v : a) v = cd(rng.normal(), rng.normal());
    orig = a;
    fft::fft_pow2(a.data(), 64, false);
    fft::fft_pow2(a.data(), 64, true);
    for (int i = 0; i < 64; ++i) CHECK(std::abs(a[i] - orig[i]) < 1e-12);
}

TEST_CASE("2D transform matches the direct double sum") {
    Rng rng(2);
    // 8 exercises the radix-2 path, 27 and 48 the chirp path.
    for (int n : {8, 27, 48}) {
        auto w = random_window(n, rng);
        auto got = fft::dft2(w);
        auto want = testutil::dft2_direct(w);
        CHECK(testutil::max_rel_err(got, want) < 1e-9);
    }
}

TEST_CASE("impulse at the origin transforms to a flat spectrum") {
    Tensor<double> w({12, 12}, 0.0);
    w.v[0] = 1.0;
    auto X = fft::dft2(w);
    for (const cd& x : X) CHECK(std::abs(x - cd(1, 0)) < 1e-12);
}

TEST_CASE("a pure cosine concentrates its power in two conjugate bins") {
    const int n = 32, ku = 3, kv = 5;
    Tensor<double> w({n, n});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            w.v[(size_t)r * n + c] =
                std::cos(2 * testutil::kPi * (ku * r + kv * c) / (double)n);
    auto X = fft::dft2(w);
    const double total = fft::spectrum_power(X, false);
    const double two_bins =
        std::norm(X[(size_t)ku * n + kv]) + std::norm(X[(size_t)(n - ku) * n + (n - kv)]);
    CHECK(two_bins == doctest::Approx(total).epsilon(1e-9));
    CHECK(total == doctest::Approx(0.5 * n * n * n * n).epsilon(1e-9));
}

TEST_CASE("total power obeys the n^2 energy identity") {
    Rng rng(3);
    for (int n : {16, 96}) {
        auto w = random_window(n, rng);
        double energy = 0, total = 0;
        for (double v : w.v) energy += v * v;
        auto X = fft::dft2(w);
        total = fft::spectrum_power(X, false);
        CHECK(total == doctest::Approx((double)n * n * energy).epsilon(1e-9));

        // Excluding DC removes exactly |sum of pixels|^2.
        double s = 0;
        for (double v : w.v) s += v;
        CHECK(fft::spectrum_power(X, true) == doctest::Approx(total - s * s).epsilon(1e-9));
    }
}

TEST_CASE("one plan can serve many threads") {
    Rng rng(4);
    const int n = 96;
    fft::DftPlan plan(n);
    std::vector<Tensor<double>> ws;
    for (int i = 0; i < 8; ++i) ws.push_back(random_window(n, rng));

    std::vector<std::vector<cd>> serial(8), parallel(8);
    for (int i = 0; i < 8; ++i) serial[i] = fft::dft2(ws[i], plan);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < 8; ++i) parallel[i] = fft::dft2(ws[i], plan);
    for (int i = 0; i < 8; ++i) {
        REQUIRE(parallel[i].size() == serial[i].size());
        for (size_t k = 0; k < serial[i].size(); ++k)
            CHECK(parallel[i][k] == serial[i][k]);  // same code path => bitwise
    }
}

TEST_CASE("shape and plan mismatches are rejected") {
    Tensor<double> rect({4, 6}, 1.0);
    CHECK_THROWS_AS((void)fft::dft2(rect), ShapeError);
    fft::DftPlan plan(8);
    Tensor<double> w({12, 12}, 1.0);
    CHECK_THROWS_AS((void)fft::dft2(w, plan), ShapeError);
    CHECK_THROWS_AS(fft::DftPlan(0), ConfigError);
}

}  // TEST_SUITE
