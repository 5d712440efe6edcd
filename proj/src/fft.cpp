#include "sarc/fft.hpp"

#include <cmath>

#include "sarc/errors.hpp"

namespace sarc::fft {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_pow2(int n) {
    int m = 1;
    while (m < n) m <<= 1;
    return m;
}
}  // namespace

void fft_pow2(cd* a, int n, bool inverse) {
    // Bit-reversal permutation.
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        double ang = 2 * kPi / len * (inverse ? 1 : -1);
        cd wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            cd w(1);
            for (int j = 0; j < len / 2; ++j) {
                cd u = a[i + j];
                cd v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (int i = 0; i < n; ++i) a[i] /= n;
    }
}

DftPlan::DftPlan(int n) : n_(n) {
    if (n <= 0) throw ConfigError("DFT length must be positive");
    if (is_pow2(n)) return;  // radix-2 path, nothing to precompute
    m_ = next_pow2(2 * n - 1);
    chirp_.resize(n);
    for (int j = 0; j < n; ++j) {
        // j^2 mod 2n keeps the angle argument small without changing the value.
        long long r = (long long)j * j % (2LL * n);
        double ang = -kPi * (double)r / n;
        chirp_[j] = cd(std::cos(ang), std::sin(ang));
    }
    std::vector<cd> b(m_, cd(0));
    b[0] = std::conj(chirp_[0]);
    for (int j = 1; j < n; ++j) {
        b[j] = std::conj(chirp_[j]);
        b[m_ - j] = b[j];
    }
    fft_pow2(b.data(), m_, false);
    bfft_ = std::move(b);
}

void DftPlan::forward(cd* x) const {
    if (m_ == 0) {
        fft_pow2(x, n_, false);
        return;
    }
    std::vector<cd> a(m_, cd(0));
    for (int j = 0; j < n_; ++j) a[j] = x[j] * chirp_[j];
    fft_pow2(a.data(), m_, false);
    for (int k = 0; k < m_; ++k) a[k] *= bfft_[k];
    fft_pow2(a.data(), m_, true);
    for (int k = 0; k < n_; ++k) x[k] = a[k] * chirp_[k];
}

std::vector<cd> dft2(const Tensor<double>& window) {
    if (window.ndim() != 2 || window.dim(0) != window.dim(1)) {
        throw ShapeError("dft2 requires a square window, got " + shape_str(window.shape));
    }
    DftPlan plan(window.dim(0));
    return dft2(window, plan);
}

std::vector<cd> dft2(const Tensor<double>& window, const DftPlan& plan) {
    if (window.ndim() != 2 || window.dim(0) != window.dim(1)) {
        throw ShapeError("dft2 requires a square window, got " + shape_str(window.shape));
    }
    int n = window.dim(0);
    if (plan.size() != n) throw ShapeError("dft2 plan length does not match window size");
    std::vector<cd> X((size_t)n * n);
    for (size_t i = 0; i < X.size(); ++i) X[i] = cd(window.v[i], 0.0);
    for (int r = 0; r < n; ++r) plan.forward(X.data() + (size_t)r * n);
    std::vector<cd> col(n);
    for (int c = 0; c < n; ++c) {
        for (int r = 0; r < n; ++r) col[r] = X[(size_t)r * n + c];
        plan.forward(col.data());
        for (int r = 0; r < n; ++r) X[(size_t)r * n + c] = col[r];
    }
    return X;
}

double spectrum_power(const std::vector<cd>& X, bool exclude_dc) {
    double p = 0;
    for (const cd& x : X) p += std::norm(x);
    if (exclude_dc && !X.empty()) p -= std::norm(X[0]);
    return p;
}

}  // namespace sarc::fft
