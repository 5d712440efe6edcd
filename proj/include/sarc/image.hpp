#pragma once

#include <cstdint>
#include <string>

#include "sarc/tensor.hpp"

namespace sarc {

// Single-channel fluorescence image with raw (unnormalized) intensities.
struct CellImage {
    std::string id;
    Tensor<float> pixels;  // {H, W}

    int height() const { return pixels.dim(0); }
    int width() const { return pixels.dim(1); }
};

// Throws ValidationError unless all intensities are finite and >= 0 and the
// image is at least 1x1.
void validate_cell_image(const CellImage& img);

// Loads an 8/16-bit grayscale PNG or TIFF (float TIFF also accepted) as raw
// float intensities. Multi-channel files use channel 0 with a warning on
// stderr. The id is the file stem.
CellImage load_cell_image(const std::string& path);

// Writers for synthetic data. Values are clamped to the container range.
void save_image_png8(const std::string& path, const Tensor<float>& img);
void save_image_png16(const std::string& path, const Tensor<float>& img);

// Single-channel float32 TIFF, uncompressed; the roundtrip is bit-exact.
void save_image_tiff32(const std::string& path, const Tensor<float>& img);

// 3-channel float32 stack stored as an uncompressed 32-bit TIFF so the
// roundtrip is bit-exact.
void write_stack_tiff(const std::string& path, const Tensor<float>& chw);
Tensor<float> read_stack_tiff(const std::string& path);

// Small class-id maps (values 0..5) stored raw in 8-bit PNG.
void write_class_png(const std::string& path, const Tensor<uint8_t>& map);
Tensor<uint8_t> read_class_png(const std::string& path);

// Per-image min-max to [0,1]; a constant image maps to all zeros.
Tensor<float> minmax01(const Tensor<float>& img);

}  // namespace sarc
