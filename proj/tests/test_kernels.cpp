#include <vector>

#include "doctest.h"
#include "sarc/kernels.hpp"
#include "sarc/rng.hpp"
#include "testutil.hpp"

using namespace sarc;

namespace {

// Naive triple loop, the definition gemm is checked against.
template <class T>
void gemm_naive(bool tA, bool tB, int M, int N, int K, T alpha, const T* A, int lda,
                const T* B, int ldb, T beta, T* C, int ldc) {
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            double acc = 0;
            for (int k = 0; k < K; ++k) {
                const T a = tA ? A[(size_t)k * lda + i] : A[(size_t)i * lda + k];
                const T b = tB ? B[(size_t)j * ldb + k] : B[(size_t)k * ldb + j];
                acc += (double)a * b;
            }
            C[(size_t)i * ldc + j] = (T)(alpha * acc + beta * C[(size_t)i * ldc + j]);
        }
    }
}

std::vector<float> randv(size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = (float)rng.normal();
    return v;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("gemm variants agree with the naive definition") {
    Rng rng(3);
    for (bool tA : {false, true}) {
        for (bool tB : {false, true}) {
            const int M = 17, N = 13, K = 21;
            auto A = randv((size_t)M * K, rng);
            auto B = randv((size_t)K * N, rng);
            auto C0 = randv((size_t)M * N, rng);
            const int lda = tA ? M : K, ldb = tB ? K : N;

            auto want = C0;
            gemm_naive(tA, tB, M, N, K, 0.5f, A.data(), lda, B.data(), ldb, 0.25f,
                       want.data(), N);

            for (int which = 0; which < 3; ++which) {
                auto got = C0;
                if (which == 0)
                    kernels::gemm_serial(tA, tB, M, N, K, 0.5f, A.data(), lda, B.data(), ldb,
                                         0.25f, got.data(), N);
                else if (which == 1)
                    kernels::gemm_omp(tA, tB, M, N, K, 0.5f, A.data(), lda, B.data(), ldb,
                                      0.25f, got.data(), N);
                else
                    kernels::gemm_blas(tA, tB, M, N, K, 0.5f, A.data(), lda, B.data(), ldb,
                                       0.25f, got.data(), N);
                for (size_t i = 0; i < got.size(); ++i)
                    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("im2col + gemm convolution matches direct convolution") {
    Rng rng(5);
    const int C = 3, H = 11, W = 9, OC = 4, k = 3, stride = 2, pad = 1;
    const int OH = kernels::conv_out_dim(H, k, stride, pad);
    const int OW = kernels::conv_out_dim(W, k, stride, pad);
    auto x = randv((size_t)C * H * W, rng);
    auto w = randv((size_t)OC * C * k * k, rng);
    auto b = randv(OC, rng);

    std::vector<float> col((size_t)C * k * k * OH * OW);
    kernels::im2col(x.data(), C, H, W, k, k, stride, pad, col.data());
    std::vector<float> y((size_t)OC * OH * OW, 0.0f);
    kernels::gemm<float>(false, false, OC, OH * OW, C * k * k, 1.0f, w.data(), C * k * k,
                         col.data(), OH * OW, 0.0f, y.data(), OH * OW);
    for (int oc = 0; oc < OC; ++oc)
        for (int i = 0; i < OH * OW; ++i) y[(size_t)oc * OH * OW + i] += b[oc];

    std::vector<float> want((size_t)OC * OH * OW);
    testutil::conv2d_direct(x.data(), w.data(), b.data(), C, H, W, OC, k, stride, pad,
                            want.data());
    for (size_t i = 0; i < y.size(); ++i)
        CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-4));
}

TEST_CASE("col2im is the adjoint of im2col") {
    // <im2col(x), c> == <x, col2im(c)> for random x and c: the pair is used
    // as forward/backward of convolution, so adjointness is the requirement.
    Rng rng(7);
    const int C = 2, H = 7, W = 6, k = 3, stride = 2, pad = 1;
    const int OH = kernels::conv_out_dim(H, k, stride, pad);
    const int OW = kernels::conv_out_dim(W, k, stride, pad);
    const size_t colsz = (size_t)C * k * k * OH * OW;

    auto x = randv((size_t)C * H * W, rng);
    auto c = randv(colsz, rng);
    std::vector<float> cx(colsz);
    kernels::im2col(x.data(), C, H, W, k, k, stride, pad, cx.data());
    std::vector<float> xc((size_t)C * H * W);
    kernels::col2im(c.data(), C, H, W, k, k, stride, pad, xc.data());

    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < colsz; ++i) lhs += (double)cx[i] * c[i];
    for (size_t i = 0; i < x.size(); ++i) rhs += (double)x[i] * xc[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
}

TEST_CASE("depthwise convolution matches per-channel direct convolution") {
    Rng rng(9);
    const int C = 3, H = 8, W = 7, k = 5, pad = 2;
    auto x = randv((size_t)C * H * W, rng);
    auto w = randv((size_t)C * k * k, rng);
    auto b = randv(C, rng);

    std::vector<float> y((size_t)C * H * W);
    kernels::depthwise_fwd(x.data(), w.data(), b.data(), C, H, W, k, pad, y.data());

    // Each channel is an independent 1-in/1-out convolution.
    for (int c = 0; c < C; ++c) {
        std::vector<float> want((size_t)H * W);
        testutil::conv2d_direct(x.data() + (size_t)c * H * W, w.data() + (size_t)c * k * k,
                                b.data() + c, 1, H, W, 1, k, 1, pad, want.data());
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(y[(size_t)c * H * W + i] == doctest::Approx(want[i]).epsilon(1e-4));
    }
}

TEST_CASE("maxpool forward picks the max and backward routes to the argmax") {
    // 1 channel, 4x4, k=2 s=2: hand fixture.
    std::vector<float> x = {1, 2, 5, 4,   //
                            3, 0, 1, 1,   //
                            9, 8, 2, 2,   //
                            7, 6, 2, 3};
    std::vector<float> y(4);
    std::vector<int> am(4);
    kernels::maxpool_fwd(x.data(), 1, 4, 4, 2, 2, y.data(), am.data());
    CHECK(y == std::vector<float>{3, 5, 9, 3});
    CHECK(am == std::vector<int>{4, 2, 8, 15});

    std::vector<float> dy = {1, 2, 3, 4}, dx(16);
    kernels::maxpool_bwd(dy.data(), am.data(), 1, 4, 4, 2, 2, dx.data());
    std::vector<float> want(16, 0.0f);
    want[4] = 1;
    want[2] = 2;
    want[8] = 3;
    want[15] = 4;
    CHECK(dx == want);
}

TEST_CASE("resize keeps constants and is exact at identity size") {
    Rng rng(11);
    auto x = randv((size_t)2 * 9 * 7, rng);
    std::vector<float> y(x.size());
    kernels::resize_bilinear(x.data(), 2, 9, 7, 9, 7, y.data());
    CHECK(x == y);
    kernels::resize_nearest(x.data(), 2, 9, 7, 9, 7, y.data());
    CHECK(x == y);

    std::vector<float> c((size_t)5 * 5, 4.25f), up((size_t)16 * 16);
    kernels::resize_bilinear(c.data(), 1, 5, 5, 16, 16, up.data());
    for (float v : up) CHECK(v == doctest::Approx(4.25f));
}

TEST_CASE("nearest resize at integer upscale replicates pixels") {
    std::vector<float> x = {1, 2, 3, 4};  // 2x2
    std::vector<float> y(16);
    kernels::resize_nearest(x.data(), 1, 2, 2, 4, 4, y.data());
    std::vector<float> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(y == want);
}

TEST_CASE("reflect index is a triangle wave without repeated edges") {
    // n=4: 0 1 2 3 | 3 2 1 0 | 0 1 2 3 ...
    std::vector<int> want = {0, 1, 2, 3, 3, 2, 1, 0, 0, 1, 2, 3};
    for (int i = 0; i < (int)want.size(); ++i) CHECK(kernels::reflect_index(i, 4) == want[i]);
    CHECK(kernels::reflect_index(5, 1) == 0);
}

TEST_CASE("pad_reflect_to mirrors bottom/right and can exceed one period") {
    Tensor<float> img({2, 3});
    img.v = {1, 2, 3, 4, 5, 6};
    auto p = kernels::pad_reflect_to(img, 5, 7);
    CHECK(p.dim(0) == 5);
    CHECK(p.dim(1) == 7);
    // Row pattern for n=2: 0 1 1 0 0; col pattern for n=3: 0 1 2 2 1 0 0.
    std::vector<float> row0 = {1, 2, 3, 3, 2, 1, 1};
    for (int x = 0; x < 7; ++x) CHECK(p.v[x] == row0[x]);
    CHECK(p.v[(size_t)2 * 7 + 0] == 4);   // row 2 -> source row 1
    CHECK(p.v[(size_t)3 * 7 + 0] == 1);   // row 3 -> source row 0
    CHECK(p.v[(size_t)4 * 7 + 3] == 3);   // row 4 -> source row 0, col 3 -> source col 2

    // No padding needed returns the input unchanged.
    auto same = kernels::pad_reflect_to(img, 2, 2);
    CHECK(same.v == img.v);
}

TEST_CASE("sobel serial, parallel, and direct convolution agree") {
    Rng rng(13);
    for (int t = 0; t < 5; ++t) {
        const int H = (int)rng.uniform_int(5, 40), W = (int)rng.uniform_int(5, 40);
        // Integer-valued pixels keep every intermediate exactly representable,
        // so all three paths must agree bit for bit.
        Tensor<float> img({H, W});
        for (auto& v : img.v) v = (float)rng.uniform_int(0, 255);

        std::vector<float> a((size_t)H * W), b((size_t)H * W), c((size_t)H * W);
        kernels::sobel_mag_serial(img.data(), H, W, a.data());
        kernels::sobel_mag_omp(img.data(), H, W, b.data());
        testutil::sobel_direct(img.data(), H, W, c.data());
        CHECK(a == b);
        CHECK(a == c);
    }
}

TEST_CASE("sobel of a constant image is zero") {
    std::vector<float> x((size_t)12 * 10, 7.5f), y((size_t)12 * 10, 1.0f);
    kernels::sobel_mag_serial(x.data(), 12, 10, y.data());
    for (float v : y) CHECK(v == 0.0f);
}

}  // TEST_SUITE
