#include "sarc/representations.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "sarc/errors.hpp"
#include "sarc/fft.hpp"
#include "sarc/kernels.hpp"

namespace sarc {

namespace {

Tensor<float> resize2d(const Tensor<float>& in, int oh, int ow, bool nearest) {
    Tensor<float> out({oh, ow});
    if (nearest)
        kernels::resize_nearest(in.data(), 1, in.dim(0), in.dim(1), oh, ow, out.data());
    else
        kernels::resize_bilinear(in.data(), 1, in.dim(0), in.dim(1), oh, ow, out.data());
    return out;
}

std::pair<float, float> minmax_of(const Tensor<float>& t) {
    float lo = t.v[0], hi = t.v[0];
    for (float x : t.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return {lo, hi};
}

}  // namespace

Tensor<float> WindowGrid::window(int r, int c) const {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
        throw ValidationError("window (" + std::to_string(r) + "," + std::to_string(c) +
                              ") outside grid " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    Tensor<float> w({n, n});
    const int pw = padded.dim(1);
    const float* src = padded.data() + (size_t)r * step * pw + (size_t)c * step;
    for (int i = 0; i < n; ++i)
        std::copy(src + (size_t)i * pw, src + (size_t)i * pw + n, w.data() + (size_t)i * n);
    return w;
}

WindowGrid tile_windows(const CellImage& img, int n, int step) {
    if (n <= 0 || step <= 0) throw ConfigError("window size and step must be positive");
    WindowGrid g;
    g.n = n;
    g.step = step;
    g.source_id = img.id;
    g.padded = kernels::pad_reflect_to(img.pixels, std::max(img.height(), n),
                                       std::max(img.width(), n));
    g.rows = (g.padded.dim(0) - n) / step + 1;
    g.cols = (g.padded.dim(1) - n) / step + 1;
    return g;
}

FFTPowerImage fft_power_map(const CellImage& img, bool exclude_dc, int n, int step) {
    WindowGrid grid = tile_windows(img, n, step);
    FFTPowerImage out;
    out.values = Tensor<float>({grid.rows, grid.cols});
    out.dc_excluded = exclude_dc;
    out.source_id = img.id;
    fft::DftPlan plan(n);
    // DftPlan::forward keeps its scratch local, so windows can be transformed
    // concurrently through one shared plan.
#pragma omp parallel for schedule(static)
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            Tensor<double> w = grid.window(r, c).cast<double>();
            std::vector<fft::cd> spec = fft::dft2(w, plan);
            out.values.v[(size_t)r * grid.cols + c] =
                (float)fft::spectrum_power(spec, exclude_dc);
        }
    }
    return out;
}

GradientMagnitudeImage sobel_gradient_magnitude(const CellImage& img) {
    GradientMagnitudeImage out;
    out.values = Tensor<float>({img.height(), img.width()});
    kernels::sobel_mag_omp(img.pixels.data(), img.height(), img.width(), out.values.data());
    out.source_id = img.id;
    return out;
}

RepresentationStack assemble_stack(const FFTPowerImage& fft, const MaturityMap& maturity,
                                   const GradientMagnitudeImage& grad) {
    if (fft.source_id != maturity.source_id || fft.source_id != grad.source_id)
        throw ValidationError("stack inputs come from different images: '" + fft.source_id +
                              "', '" + maturity.source_id + "', '" + grad.source_id + "'");
    if (fft.values.ndim() != 2 || maturity.values.ndim() != 2 || grad.values.ndim() != 2)
        throw ShapeError("stack inputs must be 2-d maps");
    if (fft.values.dim(0) != maturity.values.dim(0) ||
        fft.values.dim(1) != maturity.values.dim(1))
        throw ShapeError("fft map " + shape_str(fft.values.shape) + " and maturity map " +
                         shape_str(maturity.values.shape) + " must share the window grid");

    constexpr int S = 224;
    RepresentationStack out;
    out.chw = Tensor<float>({3, S, S});
    StackMeta& m = out.meta;
    m.source_id = fft.source_id;
    m.exclude_dc = fft.dc_excluded;

    // Channel 0: log1p compresses the power's dynamic range; resize, then
    // scale the result to [0,1].
    Tensor<float> f = fft.values;
    for (float& x : f.v) x = std::log1p(x);
    Tensor<float> f224 = resize2d(f, S, S, /*nearest=*/false);
    std::tie(m.fft_min, m.fft_max) = minmax_of(f224);
    f224 = minmax01(f224);
    std::copy(f224.v.begin(), f224.v.end(), out.chw.data());

    // Channel 1: classes 0..5 map to fixed fractions of 5; nearest-neighbor
    // keeps the value set discrete.
    Tensor<float> p(maturity.values.shape);
    for (size_t i = 0; i < p.v.size(); ++i) p.v[i] = (float)maturity.values.v[i] / 5.0f;
    Tensor<float> p224 = resize2d(p, S, S, /*nearest=*/true);
    std::copy(p224.v.begin(), p224.v.end(), out.chw.data() + (size_t)S * S);

    // Channel 2: gradient magnitude, resized then min-max scaled.
    Tensor<float> g224 = resize2d(grad.values, S, S, /*nearest=*/false);
    std::tie(m.grad_min, m.grad_max) = minmax_of(g224);
    g224 = minmax01(g224);
    std::copy(g224.v.begin(), g224.v.end(), out.chw.data() + (size_t)2 * S * S);
    return out;
}

void write_stack_sidecar(const std::string& path, const StackMeta& m) {
    nlohmann::json j;
    j["source_id"] = m.source_id;
    j["source_hash"] = m.source_hash;
    j["window_n"] = m.window_n;
    j["window_step"] = m.window_step;
    j["exclude_dc"] = m.exclude_dc;
    j["fft_log1p"] = m.fft_log1p;
    j["fft_min"] = m.fft_min;
    j["fft_max"] = m.fft_max;
    j["grad_min"] = m.grad_min;
    j["grad_max"] = m.grad_max;
    j["maturity_scale"] = m.maturity_scale;
    j["interp_fft"] = m.interp_fft;
    j["interp_pattern"] = m.interp_pattern;
    j["interp_gradient"] = m.interp_gradient;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sidecar '" + path + "'");
    out << j.dump(2) << "\n";
}

StackMeta read_stack_sidecar(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read sidecar '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("sidecar '" + path + "': " + e.what());
    }
    StackMeta m;
    try {
        m.source_id = j.at("source_id").get<std::string>();
        m.source_hash = j.value("source_hash", std::string());
        m.window_n = j.at("window_n").get<int>();
        m.window_step = j.at("window_step").get<int>();
        m.exclude_dc = j.at("exclude_dc").get<bool>();
        m.fft_log1p = j.at("fft_log1p").get<bool>();
        m.fft_min = j.at("fft_min").get<float>();
        m.fft_max = j.at("fft_max").get<float>();
        m.grad_min = j.at("grad_min").get<float>();
        m.grad_max = j.at("grad_max").get<float>();
        m.maturity_scale = j.at("maturity_scale").get<float>();
        m.interp_fft = j.at("interp_fft").get<std::string>();
        m.interp_pattern = j.at("interp_pattern").get<std::string>();
        m.interp_gradient = j.at("interp_gradient").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("sidecar '" + path + "': " + e.what());
    }
    return m;
}

Tensor<float> prep_raw_input(const CellImage& img) {
    constexpr int S = 224;
    Tensor<float> norm = minmax01(img.pixels);
    Tensor<float> r = resize2d(norm, S, S, /*nearest=*/false);
    Tensor<float> out({3, S, S});
    for (int c = 0; c < 3; ++c)
        std::copy(r.v.begin(), r.v.end(), out.data() + (size_t)c * S * S);
    return out;
}

}  // namespace sarc
