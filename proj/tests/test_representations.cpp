#include <cmath>

#include "doctest.h"
#include "sarc/errors.hpp"
#include "sarc/fft.hpp"
#include "sarc/representations.hpp"
#include "sarc/rng.hpp"
#include "testutil.hpp"

using namespace sarc;
using testutil::TempDir;

namespace {

CellImage random_cell(int H, int W, uint64_t seed) {
    Rng rng(seed);
    CellImage img;
    img.id = "rand";
    img.pixels = testutil::random_image(H, W, rng);
    return img;
}

}  // namespace

TEST_SUITE("representations") {

TEST_CASE("window grid shape follows the stride formula") {
    struct Case {
        int H, W, rows, cols;
    };
    // rows = (max(H,96)-96)/8 + 1, same for cols.
    for (const Case& c : {Case{96, 96, 1, 1}, Case{128, 128, 5, 5}, Case{97, 104, 1, 2},
                          Case{40, 200, 1, 14}, Case{131, 96, 5, 1}}) {
        auto g = tile_windows(random_cell(c.H, c.W, 1));
        CHECK(g.rows == c.rows);
        CHECK(g.cols == c.cols);
        CHECK(g.padded.dim(0) >= 96);
        CHECK(g.padded.dim(1) >= 96);
    }
}

TEST_CASE("each window is the literal crop of the padded image") {
    auto img = random_cell(120, 110, 2);
    auto g = tile_windows(img);
    for (int r = 0; r < g.rows; r += 2) {
        for (int c = 0; c < g.cols; c += 2) {
            auto w = g.window(r, c);
            REQUIRE(w.dim(0) == 96);
            REQUIRE(w.dim(1) == 96);
            for (int i = 0; i < 96; i += 17) {
                for (int j = 0; j < 96; j += 17) {
                    CHECK(w.v[(size_t)i * 96 + j] ==
                          g.padded.v[(size_t)(r * 8 + i) * g.padded.dim(1) + c * 8 + j]);
                }
            }
        }
    }
    CHECK_THROWS_AS((void)g.window(g.rows, 0), ValidationError);
    CHECK_THROWS_AS((void)g.window(0, -1), ValidationError);
}

TEST_CASE("power map entries equal per-window spectral power") {
    auto img = random_cell(112, 104, 3);
    auto fp = fft_power_map(img, /*exclude_dc=*/false);
    auto g = tile_windows(img);
    REQUIRE(fp.values.dim(0) == g.rows);
    REQUIRE(fp.values.dim(1) == g.cols);
    CHECK_FALSE(fp.dc_excluded);

    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            auto w = g.window(r, c).cast<double>();
            const double want = fft::spectrum_power(fft::dft2(w), false);
            CHECK(fp.values.v[(size_t)r * g.cols + c] ==
                  doctest::Approx(want).epsilon(1e-6));
        }
    }

    // Parseval: with DC kept, each entry is n^2 times the window energy.
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            auto w = g.window(r, c);
            double energy = 0;
            for (float v : w.v) energy += (double)v * v;
            CHECK(fp.values.v[(size_t)r * g.cols + c] ==
                  doctest::Approx(96.0 * 96.0 * energy).epsilon(1e-6));
        }
    }

    auto fp_nodc = fft_power_map(img, /*exclude_dc=*/true);
    CHECK(fp_nodc.dc_excluded);
    for (size_t i = 0; i < fp.values.v.size(); ++i)
        CHECK(fp_nodc.values.v[i] <= fp.values.v[i]);
}

TEST_CASE("power map is deterministic across repeated parallel runs") {
    auto img = random_cell(128, 128, 4);
    auto a = fft_power_map(img);
    auto b = fft_power_map(img);
    CHECK(a.values.v == b.values.v);
}

TEST_CASE("gradient magnitude image matches direct convolution") {
    Rng rng(5);
    CellImage img;
    img.id = "g";
    img.pixels = Tensor<float>({33, 41});
    for (auto& v : img.pixels.v) v = (float)rng.uniform_int(0, 1023);

    auto gm = sobel_gradient_magnitude(img);
    REQUIRE(gm.values.same_shape(img.pixels));
    std::vector<float> want(img.pixels.v.size());
    testutil::sobel_direct(img.pixels.data(), 33, 41, want.data());
    CHECK(gm.values.v == want);
}

TEST_CASE("stack assembly normalizes channels and checks consistency") {
    auto img = random_cell(128, 128, 6);
    auto fp = fft_power_map(img);
    auto gm = sobel_gradient_magnitude(img);
    MaturityMap mm;
    mm.source_id = img.id;
    mm.values = Tensor<uint8_t>({fp.values.dim(0), fp.values.dim(1)});
    for (size_t i = 0; i < mm.values.v.size(); ++i) mm.values.v[i] = (uint8_t)(i % 6);

    auto stack = assemble_stack(fp, mm, gm);
    REQUIRE(stack.chw.ndim() == 3);
    CHECK(stack.chw.dim(0) == 3);
    CHECK(stack.chw.dim(1) == 224);
    CHECK(stack.chw.dim(2) == 224);
    float lo = 1e9f, hi = -1e9f;
    for (float v : stack.chw.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);

    // Pattern channel carries class/5 through nearest-neighbor resize, so the
    // value set stays on the k/5 ladder.
    const size_t plane = (size_t)224 * 224;
    for (size_t i = 0; i < plane; i += 97) {
        const float v = stack.chw.v[plane + i];
        const float k = std::round(v * 5.0f);
        CHECK(v == doctest::Approx(k / 5.0f).epsilon(1e-6));
    }

    CHECK(stack.meta.source_id == img.id);
    CHECK(stack.meta.fft_max > stack.meta.fft_min);

    MaturityMap wrong = mm;
    wrong.source_id = "other";
    CHECK_THROWS_AS((void)assemble_stack(fp, wrong, gm), ValidationError);

    MaturityMap bad_shape = mm;
    bad_shape.values = Tensor<uint8_t>({1, 1});
    CHECK_THROWS_AS((void)assemble_stack(fp, bad_shape, gm), ShapeError);
}

TEST_CASE("stack sidecar round-trips the normalization record") {
    TempDir td;
    StackMeta meta;
    meta.source_id = "cell_7";
    meta.source_hash = "deadbeef01";
    meta.exclude_dc = true;
    meta.fft_min = 0.25f;
    meta.fft_max = 9.5f;
    meta.grad_min = 0.0f;
    meta.grad_max = 3.75f;
    const std::string p = td / "cell_7_stack.json";
    write_stack_sidecar(p, meta);
    auto back = read_stack_sidecar(p);
    CHECK(back.source_id == meta.source_id);
    CHECK(back.source_hash == meta.source_hash);
    CHECK(back.exclude_dc == meta.exclude_dc);
    CHECK(back.fft_min == meta.fft_min);
    CHECK(back.fft_max == meta.fft_max);
    CHECK(back.grad_max == meta.grad_max);
    CHECK(back.window_n == 96);
    CHECK(back.window_step == 8);
}

TEST_CASE("raw-input prep emits three identical normalized channels") {
    auto img = random_cell(100, 90, 7);
    auto t = prep_raw_input(img);
    REQUIRE(t.ndim() == 3);
    CHECK(t.dim(0) == 3);
    CHECK(t.dim(1) == 224);
    CHECK(t.dim(2) == 224);
    const size_t plane = (size_t)224 * 224;
    for (size_t i = 0; i < plane; i += 131) {
        CHECK(t.v[i] == t.v[plane + i]);
        CHECK(t.v[i] == t.v[2 * plane + i]);
        CHECK(t.v[i] >= 0.0f);
        CHECK(t.v[i] <= 1.0f);
    }
}

}  // TEST_SUITE
