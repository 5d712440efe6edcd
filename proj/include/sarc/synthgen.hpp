#pragma once

#include <string>
#include <vector>

#include "sarc/dataset.hpp"
#include "sarc/image.hpp"
#include "sarc/patchnet.hpp"

namespace sarc {

// Parametric recipe for one synthetic cell. Level drives the texture:
//   1  sparse soft puncta            2  dense puncta
//   3  puncta mixed with short fibers
//   4  periodic ridge domains with perturbed orientations
//   5  globally aligned periodic ridges
// Fractional levels interpolate the recipe parameters. alignment and
// puncta_density override the level-derived defaults when set >= 0.
struct SynthSpec {
    double level = 3.0;  // [1,5]
    int height = 128, width = 128;
    double stripe_period = 12.0;  // px between ridge centers
    double alignment = -1.0;      // [0,1]; orientation coherence of ridge domains
    double puncta_density = -1.0; // puncta per 1000 px^2 of cell area
    double noise_sigma = 0.0;     // additive Gaussian inside the cell, clipped at 0
    uint64_t seed = 1;
};

void validate_synth_spec(const SynthSpec& spec);

struct SynthCell {
    CellImage image;
    double label = 0;
    double stripe_theta = 0;  // ridge-normal angle (radians); meaningful for level > 3
};

// Deterministic per spec. Background outside the elliptical cell mask is
// exactly zero; intensities are non-negative.
SynthCell generate_cell(const SynthSpec& spec);

struct DatasetGenOptions {
    int n = 50;
    uint64_t seed = 1;
    int height = 128, width = 128;
    double noise_sigma = 0.02;
    // expert2 = expert1 +/- 0.5 with this probability (sign toward the
    // interior of the scale at the ends)...
    double expert_noise_prob = 0.5;
    // ...and +/- 1.5 with this probability, producing pairs the |Δ|>1 filter
    // must drop.
    double exclude_prob = 0.0;
};

struct GeneratedDataset {
    std::string manifest_path;
    std::vector<std::string> image_paths;
    std::vector<double> levels;
};

// Writes <out_dir>/images/*.tiff, <out_dir>/manifest.csv and
// <out_dir>/spec.json. Levels cycle 1..5 so counts per level are exact.
GeneratedDataset generate_dataset(const std::string& out_dir, const DatasetGenOptions& opt);

// Balanced 96x96 patch fixtures in [0,1], classes 1..5, separable by
// construction (distinct class mean intensities plus level-matched texture).
std::vector<PatchExample> generate_patches(int per_class, uint64_t seed);

}  // namespace sarc
