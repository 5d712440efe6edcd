#include "sarc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sarc/errors.hpp"
#include "sarc/rng.hpp"

namespace sarc {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Level-anchored texture parameters; fractional levels interpolate linearly
// between the neighboring anchors.
struct Recipe {
    double puncta;        // count on a 128x128 cell; scaled by actual cell area
    double puncta_sigma;  // blob width
    double fibers;        // short-segment count
    double stripe_w;      // ridge-field weight
    double jitter;        // domain orientation spread (radians)
    double domains;       // ridge-orientation domains
    double ridge_sigma;   // ridge width
    double amp;           // overall intensity scale
};

const Recipe kAnchors[5] = {
    //   puncta  psig  fib  stw  jitter  dom  rsig  amp
    {22, 3.2, 0, 0.0, 0.00, 1, 1.4, 0.35},   // 1: sparse soft puncta
    {85, 2.2, 0, 0.0, 0.00, 1, 1.4, 0.50},   // 2: dense puncta
    {45, 2.0, 14, 0.0, 0.00, 1, 1.4, 0.65},  // 3: puncta + short fibers
    {10, 1.8, 4, 1.0, 0.52, 7, 1.4, 0.85},   // 4: perturbed ridge domains
    {0, 1.8, 0, 1.0, 0.035, 1, 1.1, 1.00},   // 5: aligned ridges
};

Recipe recipe_for(double level) {
    const int lo = std::clamp((int)std::floor(level), 1, 5);
    const int hi = std::min(lo + 1, 5);
    const double t = level - lo;
    const Recipe &a = kAnchors[lo - 1], &b = kAnchors[hi - 1];
    auto mix = [t](double x, double y) { return x + t * (y - x); };
    return {mix(a.puncta, b.puncta), mix(a.puncta_sigma, b.puncta_sigma),
            mix(a.fibers, b.fibers), mix(a.stripe_w, b.stripe_w),
            mix(a.jitter, b.jitter), std::round(mix(a.domains, b.domains)),
            mix(a.ridge_sigma, b.ridge_sigma), mix(a.amp, b.amp)};
}

struct Ellipse {
    double cy, cx, ry, rx, phi;

    bool inside(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double u = dx * std::cos(phi) + dy * std::sin(phi);
        const double v = -dx * std::sin(phi) + dy * std::cos(phi);
        return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
    }
};

void add_blob(Tensor<float>& img, double cy, double cx, double sigma, double amp) {
    const int H = img.dim(0), W = img.dim(1);
    const int r = (int)std::ceil(3 * sigma);
    const int y0 = std::max(0, (int)cy - r), y1 = std::min(H - 1, (int)cy + r);
    const int x0 = std::max(0, (int)cx - r), x1 = std::min(W - 1, (int)cx + r);
    const double inv = 1.0 / (2 * sigma * sigma);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            img.v[(size_t)y * W + x] += (float)(amp * std::exp(-d2 * inv));
        }
}

void add_fiber(Tensor<float>& img, double cy, double cx, double angle, double half_len,
               double sigma, double amp) {
    const int H = img.dim(0), W = img.dim(1);
    const double dy = std::sin(angle), dx = std::cos(angle);
    const int r = (int)std::ceil(half_len + 3 * sigma);
    const int y0 = std::max(0, (int)cy - r), y1 = std::min(H - 1, (int)cy + r);
    const int x0 = std::max(0, (int)cx - r), x1 = std::min(W - 1, (int)cx + r);
    const double inv = 1.0 / (2 * sigma * sigma);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double py = y - cy, px = x - cx;
            const double t = std::clamp(px * dx + py * dy, -half_len, half_len);
            const double qy = py - t * dy, qx = px - t * dx;
            const double d2 = qy * qy + qx * qx;
            if (d2 < 9 * sigma * sigma)
                img.v[(size_t)y * W + x] += (float)(amp * std::exp(-d2 * inv));
        }
}

// Periodic Gaussian ridges: distance to the nearest ridge line wrapped onto
// [-period/2, period/2). Shifting a point by exactly one period along the
// ridge normal reproduces the field, which the autocorrelation oracle relies
// on.
double ridge_value(double y, double x, double oy, double ox, double theta, double period,
                   double sigma) {
    const double t = (x - ox) * std::cos(theta) + (y - oy) * std::sin(theta);
    double d = std::fmod(t, period);
    if (d < 0) d += period;
    if (d > period / 2) d -= period;
    return std::exp(-d * d / (2 * sigma * sigma));
}

std::pair<double, double> sample_inside(Rng& rng, const Ellipse& e, int H, int W) {
    for (int tries = 0; tries < 10000; ++tries) {
        const double y = rng.uniform(0, H - 1), x = rng.uniform(0, W - 1);
        if (e.inside(y, x)) return {y, x};
    }
    return {e.cy, e.cx};
}

}  // namespace

void validate_synth_spec(const SynthSpec& spec) {
    if (spec.level < 1.0 || spec.level > 5.0)
        throw ConfigError("synth level must be in [1,5]");
    if (spec.height < 32 || spec.width < 32)
        throw ConfigError("synth image must be at least 32x32");
    if (spec.stripe_period < 4.0) throw ConfigError("stripe period must be >= 4 px");
    if (spec.alignment > 1.0) throw ConfigError("alignment must be <= 1");
    if (spec.noise_sigma < 0) throw ConfigError("noise sigma must be >= 0");
}

SynthCell generate_cell(const SynthSpec& spec) {
    validate_synth_spec(spec);
    Rng rng(spec.seed);
    const int H = spec.height, W = spec.width;

    Ellipse cell;
    cell.cy = H / 2.0 + rng.uniform(-0.03, 0.03) * H;
    cell.cx = W / 2.0 + rng.uniform(-0.03, 0.03) * W;
    cell.ry = 0.42 * H * rng.uniform(0.88, 0.98);
    cell.rx = 0.42 * W * rng.uniform(0.88, 0.98);
    cell.phi = rng.uniform(0, kPi);
    const double cell_area = kPi * cell.ry * cell.rx;

    Recipe rc = recipe_for(spec.level);
    if (spec.puncta_density >= 0) rc.puncta = spec.puncta_density * cell_area / 1000.0;
    if (spec.alignment >= 0) rc.jitter = (1.0 - spec.alignment) * (kPi / 4);
    // Counts were tuned on a 128x128 cell; keep texture density constant.
    const double area_scale = cell_area / (kPi * 0.42 * 128 * 0.42 * 128 * 0.93 * 0.93);

    Tensor<float> img({H, W});

    const int n_puncta = (int)std::lround(rc.puncta * area_scale);
    for (int i = 0; i < n_puncta; ++i) {
        auto [y, x] = sample_inside(rng, cell, H, W);
        add_blob(img, y, x, rc.puncta_sigma * rng.uniform(0.85, 1.15), rng.uniform(0.75, 1.25));
    }

    const int n_fibers = (int)std::lround(rc.fibers * area_scale);
    for (int i = 0; i < n_fibers; ++i) {
        auto [y, x] = sample_inside(rng, cell, H, W);
        add_fiber(img, y, x, rng.uniform(0, kPi), rng.uniform(6, 11), 1.3,
                  rng.uniform(0.8, 1.2));
    }

    double theta = rng.uniform(0, kPi);
    if (rc.stripe_w > 0) {
        const int nd = std::max(1, (int)rc.domains);
        std::vector<double> dy(nd), dx(nd), dth(nd);
        for (int d = 0; d < nd; ++d) {
            auto [y, x] = sample_inside(rng, cell, H, W);
            dy[d] = y;
            dx[d] = x;
            dth[d] = theta + rng.uniform(-rc.jitter, rc.jitter);
        }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (!cell.inside(y, x)) continue;
                int best = 0;
                double bd = 1e30;
                for (int d = 0; d < nd; ++d) {
                    const double q = (y - dy[d]) * (y - dy[d]) + (x - dx[d]) * (x - dx[d]);
                    if (q < bd) {
                        bd = q;
                        best = d;
                    }
                }
                img.v[(size_t)y * W + x] += (float)(rc.stripe_w *
                                                    ridge_value(y, x, dy[best], dx[best],
                                                                dth[best], spec.stripe_period,
                                                                rc.ridge_sigma));
            }
    }

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float& px = img.v[(size_t)y * W + x];
            if (!cell.inside(y, x)) {
                px = 0.0f;
                continue;
            }
            px = (float)(px * rc.amp);
            if (spec.noise_sigma > 0) px += (float)(spec.noise_sigma * rng.normal());
            px = std::max(px, 0.0f);
        }

    SynthCell out;
    char id[64];
    std::snprintf(id, sizeof id, "synth_L%g_s%llu", spec.level,
                  (unsigned long long)spec.seed);
    out.image.id = id;
    out.image.pixels = std::move(img);
    out.label = spec.level;
    out.stripe_theta = theta;
    return out;
}

GeneratedDataset generate_dataset(const std::string& out_dir, const DatasetGenOptions& opt) {
    if (opt.n < 1) throw ConfigError("dataset size must be >= 1");
    if (opt.expert_noise_prob < 0 || opt.exclude_prob < 0 ||
        opt.expert_noise_prob + opt.exclude_prob > 1.0)
        throw ConfigError("expert noise probabilities must be >= 0 and sum to <= 1");

    namespace fs = std::filesystem;
    const fs::path root(out_dir);
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    if (ec) throw IoError("cannot create '" + (root / "images").string() + "': " + ec.message());

    Rng rng(opt.seed);
    std::vector<int> levels(opt.n);
    for (int i = 0; i < opt.n; ++i) levels[i] = 1 + i % 5;
    rng.shuffle(levels);

    GeneratedDataset out;
    out.manifest_path = (root / "manifest.csv").string();
    std::ofstream manifest(out.manifest_path);
    if (!manifest) throw IoError("cannot write '" + out.manifest_path + "'");
    manifest << "image_path,expert1,expert2\n";

    for (int i = 0; i < opt.n; ++i) {
        SynthSpec spec;
        spec.level = levels[i];
        spec.height = opt.height;
        spec.width = opt.width;
        spec.noise_sigma = opt.noise_sigma;
        spec.seed = rng.next_u64();
        SynthCell cell = generate_cell(spec);

        char name[64];
        std::snprintf(name, sizeof name, "cell_%04d_L%d.tiff", i, levels[i]);
        const std::string rel = std::string("images/") + name;
        save_image_tiff32((root / rel).string(), cell.image.pixels);

        double expert1 = levels[i], delta = 0.0;
        const double u = rng.uniform();
        if (u < opt.exclude_prob)
            delta = 1.5;
        else if (u < opt.exclude_prob + opt.expert_noise_prob)
            delta = 0.5;
        if (delta > 0 && rng.uniform() < 0.5) delta = -delta;
        double expert2 = expert1 + delta;
        if (expert2 > 5.0 || expert2 < 1.0) expert2 = expert1 - delta;

        manifest << rel << "," << expert1 << "," << expert2 << "\n";
        out.image_paths.push_back((root / rel).string());
        out.levels.push_back(expert1);
    }
    manifest.flush();
    if (!manifest) throw IoError("write to '" + out.manifest_path + "' failed");

    nlohmann::json j;
    j["n"] = opt.n;
    j["seed"] = opt.seed;
    j["height"] = opt.height;
    j["width"] = opt.width;
    j["noise_sigma"] = opt.noise_sigma;
    j["expert_noise_prob"] = opt.expert_noise_prob;
    j["exclude_prob"] = opt.exclude_prob;
    std::ofstream spec_out(root / "spec.json");
    spec_out << j.dump(2) << "\n";
    return out;
}

std::vector<PatchExample> generate_patches(int per_class, uint64_t seed) {
    if (per_class < 1) throw ConfigError("patch count per class must be >= 1");
    Rng rng(seed);
    std::vector<PatchExample> out;
    out.reserve((size_t)per_class * 5);

    // Class mean intensities sit on a ladder so the classes stay separable
    // for the nearest-centroid oracle even before any texture cue is used.
    const double target_mean[5] = {0.05, 0.10, 0.16, 0.23, 0.30};

    for (int cls = 1; cls <= 5; ++cls) {
        for (int i = 0; i < per_class; ++i) {
            Tensor<float> p({96, 96}, 0.02f);
            switch (cls) {
                case 1:
                    for (int k = 0; k < 4; ++k)
                        add_blob(p, rng.uniform(8, 88), rng.uniform(8, 88),
                                 rng.uniform(2.6, 3.4), rng.uniform(0.8, 1.2));
                    break;
                case 2:
                    for (int k = 0; k < 16; ++k)
                        add_blob(p, rng.uniform(4, 92), rng.uniform(4, 92),
                                 rng.uniform(2.0, 2.8), rng.uniform(0.8, 1.2));
                    break;
                case 3:
                    for (int k = 0; k < 6; ++k)
                        add_fiber(p, rng.uniform(10, 86), rng.uniform(10, 86),
                                  rng.uniform(0, kPi), rng.uniform(7, 12), 1.3,
                                  rng.uniform(0.8, 1.2));
                    for (int k = 0; k < 6; ++k)
                        add_blob(p, rng.uniform(4, 92), rng.uniform(4, 92),
                                 rng.uniform(1.8, 2.4), rng.uniform(0.8, 1.2));
                    break;
                case 4:
                case 5: {
                    const double theta = rng.uniform(0, kPi);
                    const double jitter = cls == 4 ? 0.5 : 0.03;
                    const int nd = cls == 4 ? 3 : 1;
                    double dy[3], dx[3], dth[3];
                    for (int d = 0; d < nd; ++d) {
                        dy[d] = rng.uniform(0, 96);
                        dx[d] = rng.uniform(0, 96);
                        dth[d] = theta + rng.uniform(-jitter, jitter);
                    }
                    const double sigma = cls == 4 ? 1.5 : 1.2;
                    for (int y = 0; y < 96; ++y)
                        for (int x = 0; x < 96; ++x) {
                            int best = 0;
                            double bd = 1e30;
                            for (int d = 0; d < nd; ++d) {
                                const double q =
                                    (y - dy[d]) * (y - dy[d]) + (x - dx[d]) * (x - dx[d]);
                                if (q < bd) {
                                    bd = q;
                                    best = d;
                                }
                            }
                            p.v[(size_t)y * 96 + x] += (float)ridge_value(
                                y, x, dy[best], dx[best], dth[best], 12.0, sigma);
                        }
                    break;
                }
            }
            double mean = 0;
            for (float v : p.v) mean += v;
            mean /= p.v.size();
            const double scale = target_mean[cls - 1] / mean;
            for (float& v : p.v) {
                double x = v * scale + 0.015 * rng.normal();
                v = (float)std::clamp(x, 0.0, 1.0);
            }
            out.push_back({std::move(p), cls});
        }
    }
    return out;
}

}  // namespace sarc
