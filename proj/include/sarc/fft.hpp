#pragma once

#include <complex>
#include <vector>

#include "sarc/tensor.hpp"

namespace sarc::fft {

using cd = std::complex<double>;

// In-place radix-2 Cooley–Tukey; n must be a power of two. The inverse
// includes the 1/n scale.
void fft_pow2(cd* a, int n, bool inverse);

// Forward length-n DFT plan. Power-of-two sizes run radix-2 directly; other
// sizes (96 = 2^5·3 included) go through Bluestein's chirp-z convolution.
// forward() is safe to call concurrently from many threads.
class DftPlan {
  public:
    explicit DftPlan(int n);
    int size() const { return n_; }
    void forward(cd* x) const;

  private:
    int n_ = 0;
    int m_ = 0;  // pow2 convolution length, 0 when radix-2 applies directly
    std::vector<cd> chirp_;  // exp(-i*pi*j^2/n)
    std::vector<cd> bfft_;   // FFT of the wrapped conjugate chirp
};

// Forward 2-D DFT of a square n×n real window (rows then columns),
// unnormalized: X(u,v) = sum_{p,q} w(p,q) exp(-2*pi*i*(u*p + v*q)/n).
std::vector<cd> dft2(const Tensor<double>& window);
std::vector<cd> dft2(const Tensor<double>& window, const DftPlan& plan);

// Sum of |X|^2 over the spectrum, optionally dropping the (0,0) term.
double spectrum_power(const std::vector<cd>& X, bool exclude_dc);

}  // namespace sarc::fft
