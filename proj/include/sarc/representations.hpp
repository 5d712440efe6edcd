#pragma once

#include <cstdint>
#include <string>

#include "sarc/image.hpp"
#include "sarc/tensor.hpp"

namespace sarc {

// Sliding-window tiling of a (reflect-padded) image. Window (r,c) starts at
// (r*step, c*step) in the padded image.
struct WindowGrid {
    int n = 96, step = 8;
    int rows = 0, cols = 0;
    Tensor<float> padded;
    std::string source_id;

    Tensor<float> window(int r, int c) const;
};

WindowGrid tile_windows(const CellImage& img, int n = 96, int step = 8);

// One scalar per window: total spectral power sum |X(u,v)|^2, optionally
// without the DC term. With DC included this equals n^2 times the window's
// pixel energy (Parseval), which is the literal formula's behavior.
struct FFTPowerImage {
    Tensor<float> values;  // {rows, cols}
    bool dc_excluded = false;
    std::string source_id;
};

FFTPowerImage fft_power_map(const CellImage& img, bool exclude_dc = false, int n = 96,
                            int step = 8);

// Per-pixel sqrt(Gx^2 + Gy^2) with the fixed 3x3 kernels; same size as input.
struct GradientMagnitudeImage {
    Tensor<float> values;  // {H, W}
    std::string source_id;
};

GradientMagnitudeImage sobel_gradient_magnitude(const CellImage& img);

// Per-window pattern class over the same stride-8 grid; 0 marks background.
struct MaturityMap {
    Tensor<uint8_t> values;  // {rows, cols}, entries 0..5
    std::string source_id;
};

// Normalization/geometry record stored in the per-stack sidecar.
struct StackMeta {
    std::string source_id;
    std::string source_hash;  // FNV-1a of the source image bytes; "" if unset
    int window_n = 96, window_step = 8;
    bool exclude_dc = false;
    bool fft_log1p = true;
    float fft_min = 0, fft_max = 0;    // after log1p + resize
    float grad_min = 0, grad_max = 0;  // after resize
    float maturity_scale = 5.0f;
    std::string interp_fft = "bilinear";
    std::string interp_pattern = "nearest";
    std::string interp_gradient = "bilinear";
};

struct RepresentationStack {
    Tensor<float> chw;  // {3,224,224}, channels (fft, pattern, gradient), each in [0,1]
    StackMeta meta;
};

RepresentationStack assemble_stack(const FFTPowerImage& fft, const MaturityMap& maturity,
                                   const GradientMagnitudeImage& grad);

void write_stack_sidecar(const std::string& path, const StackMeta& meta);
StackMeta read_stack_sidecar(const std::string& path);

// Stream-A input prep: min-max the raw image, resize to 224, replicate to 3
// channels.
Tensor<float> prep_raw_input(const CellImage& img);

}  // namespace sarc
