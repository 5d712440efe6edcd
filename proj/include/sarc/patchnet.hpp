#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "sarc/convnext.hpp"
#include "sarc/representations.hpp"

namespace sarc {

struct PatchNetConfig {
    nn::ConvNeXtSpec backbone;  // in_channels forced to 1
    int num_classes = 5;
};

// "toy" is small enough to train on one core; "paper" is the ConvNeXt-Tiny
// layout.
inline PatchNetConfig patchnet_preset(const std::string& name) {
    PatchNetConfig cfg;
    cfg.backbone.in_channels = 1;
    if (name == "toy") {
        cfg.backbone.depths = {1, 1, 2, 1};
        cfg.backbone.channels = {24, 48, 96, 192};
    } else if (name == "paper") {
        cfg.backbone.depths = {3, 3, 9, 3};
        cfg.backbone.channels = {96, 192, 384, 768};
    } else {
        throw ConfigError("unknown patchnet preset '" + name + "' (valid: toy, paper)");
    }
    return cfg;
}

// A labeled 96x96 patch with intensities already in [0,1]; class_id 1..5.
struct PatchExample {
    Tensor<float> patch;
    int class_id = 0;
};

// Bilinear-upsample a [0,1] 96x96 patch to the classifier's 224x224
// single-channel input.
inline Tensor<float> prep_patch_to_input(const Tensor<float>& patch) {
    check_shape(patch, {96, 96}, "patch");
    Tensor<float> out({1, 224, 224});
    kernels::resize_bilinear(patch.data(), 1, 96, 96, 224, 224, out.data());
    return out;
}

namespace nn {

// Five-way pattern classifier: ConvNeXt trunk on the single-channel patch,
// two extra channel-preserving convolutions, global average pool, linear
// head over the five classes.
template <class T>
class PatchNet {
  public:
    PatchNetConfig cfg;

    PatchNet() = default;

    PatchNet(const PatchNetConfig& cfg_, uint64_t seed) : cfg(cfg_) {
        cfg.backbone.in_channels = 1;
        validate_convnext_spec(cfg.backbone);
        if (cfg.num_classes != 5) throw ConfigError("patch classifier is five-way");
        Rng rng(seed);
        backbone_ = ConvNeXtStream<T>(cfg.backbone, rng);
        const int c = cfg.backbone.channels[3];
        conv3_ = Conv2d<T>(c, c, 3, 1, 1, rng);
        conv1_ = Conv2d<T>(c, c, 1, 1, 0, rng);
        fc_ = Linear<T>(c, cfg.num_classes, rng);
    }

    // x: {N,1,224,224} -> logits {N,5}
    ad::Var<T> forward(const Tensor<T>& x) {
        if (x.ndim() != 4 || x.dim(1) != 1 || x.dim(2) != 224 || x.dim(3) != 224)
            throw ShapeError("patch input must be {N,1,224,224}, got " + shape_str(x.shape));
        auto feats = backbone_.forward(ad::Var<T>::leaf(x));
        auto h = ad::relu(conv3_(feats[3]));
        h = ad::relu(conv1_(h));
        h = ad::global_avg_pool(h);
        return fc_(h);
    }

    ParamMap<T> named_params() {
        ParamMap<T> m;
        backbone_.collect("backbone", m);
        conv3_.collect("conv3", m);
        conv1_.collect("conv1", m);
        fc_.collect("fc", m);
        return m;
    }

  private:
    ConvNeXtStream<T> backbone_;
    Conv2d<T> conv3_, conv1_;
    Linear<T> fc_;
};

}  // namespace nn

struct PatchPrediction {
    int class_id = 0;               // 1..5
    std::array<double, 5> probs{};  // softmax over classes 1..5
};

namespace detail {

inline PatchPrediction logits_to_prediction(const double* row) {
    PatchPrediction p;
    double mx = row[0], sum = 0;
    for (int k = 1; k < 5; ++k) mx = std::max(mx, row[k]);
    for (int k = 0; k < 5; ++k) {
        p.probs[k] = std::exp(row[k] - mx);
        sum += p.probs[k];
    }
    int best = 0;
    for (int k = 0; k < 5; ++k) {
        p.probs[k] /= sum;
        if (p.probs[k] > p.probs[best]) best = k;
    }
    p.class_id = best + 1;
    return p;
}

}  // namespace detail

// Classify one [0,1] patch. Softmax ties resolve to the lower class.
template <class T>
PatchPrediction classify_patch(nn::PatchNet<T>& model, const Tensor<float>& patch) {
    ad::NoGradGuard ng;
    Tensor<T> x({1, 1, 224, 224});
    Tensor<float> in1 = prep_patch_to_input(patch);
    for (size_t i = 0; i < in1.v.size(); ++i) x.v[i] = (T)in1.v[i];
    ad::Var<T> logits = model.forward(x);
    double row[5];
    for (int k = 0; k < 5; ++k) row[k] = (double)logits.val().v[k];
    return detail::logits_to_prediction(row);
}

// Slide the stride-8 window grid over the cell image and classify each
// window; background windows get class 0. A window is background when the
// mask covers less than half of it, or — with no mask — when its mean
// intensity falls below 5% of the image maximum. Foreground windows are
// scaled by the image maximum before classification.
template <class T>
MaturityMap infer_maturity_map(nn::PatchNet<T>& model, const CellImage& img,
                               const Tensor<uint8_t>* mask = nullptr, int batch = 16,
                               int n = 96, int step = 8) {
    if (mask &&
        (mask->ndim() != 2 || mask->dim(0) != img.height() || mask->dim(1) != img.width()))
        throw ShapeError("mask must match image size " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()));
    if (batch < 1) throw ConfigError("batch must be >= 1");
    ad::NoGradGuard ng;
    WindowGrid grid = tile_windows(img, n, step);
    MaturityMap out;
    out.source_id = img.id;
    out.values = Tensor<uint8_t>({grid.rows, grid.cols});

    float img_max = 0;
    for (float x : img.pixels.v) img_max = std::max(img_max, x);
    const float inv = img_max > 0 ? 1.0f / img_max : 0.0f;

    // Pad the mask the same way the image was padded so window coordinates
    // line up.
    Tensor<float> padded_mask;
    if (mask) {
        Tensor<float> mf({mask->dim(0), mask->dim(1)});
        for (size_t i = 0; i < mf.v.size(); ++i) mf.v[i] = mask->v[i] ? 1.0f : 0.0f;
        padded_mask = kernels::pad_reflect_to(mf, grid.padded.dim(0), grid.padded.dim(1));
    }

    std::vector<std::pair<int, int>> pending;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            bool background;
            if (mask) {
                double cover = 0;
                const int pw = padded_mask.dim(1);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        cover += padded_mask.v[(size_t)(r * step + i) * pw + c * step + j];
                background = cover < 0.5 * n * n;
            } else if (img_max <= 0) {
                background = true;  // blank image: nothing to classify
            } else {
                double mean = 0;
                Tensor<float> w = grid.window(r, c);
                for (float x : w.v) mean += x;
                mean /= w.v.size();
                background = mean < 0.05 * img_max;
            }
            if (background)
                out.values.v[(size_t)r * grid.cols + c] = 0;
            else
                pending.emplace_back(r, c);
        }
    }

    for (size_t start = 0; start < pending.size(); start += (size_t)batch) {
        const int nb = (int)std::min((size_t)batch, pending.size() - start);
        Tensor<T> x({nb, 1, 224, 224});
        for (int b = 0; b < nb; ++b) {
            auto [r, c] = pending[start + b];
            Tensor<float> w = grid.window(r, c);
            for (float& px : w.v) px *= inv;
            Tensor<float> in1 = prep_patch_to_input(w);
            for (size_t i = 0; i < in1.v.size(); ++i)
                x.v[(size_t)b * in1.v.size() + i] = (T)in1.v[i];
        }
        ad::Var<T> logits = model.forward(x);
        for (int b = 0; b < nb; ++b) {
            auto [r, c] = pending[start + b];
            const T* row = logits.val().data() + (size_t)b * 5;
            int best = 0;
            for (int k = 1; k < 5; ++k)
                if (row[k] > row[best]) best = k;
            out.values.v[(size_t)r * grid.cols + c] = (uint8_t)(best + 1);
        }
    }
    return out;
}

struct PatchMetrics {
    double accuracy = 0;
    double precision_weighted = 0, recall_weighted = 0, f1_weighted = 0;
    double precision_macro = 0, recall_macro = 0, f1_macro = 0;
    std::array<std::array<int, 5>, 5> confusion{};  // [true][pred]
};

// Confusion-matrix metrics over classes 1..5. A class with an empty
// denominator contributes 0 to precision/recall; weighted averages use
// true-class counts.
template <class T>
PatchMetrics eval_patchnet(nn::PatchNet<T>& model, const std::vector<PatchExample>& examples) {
    if (examples.empty()) throw ValidationError("patch evaluation needs at least one example");
    PatchMetrics m;
    int correct = 0;
    for (const auto& ex : examples) {
        if (ex.class_id < 1 || ex.class_id > 5)
            throw ValidationError("patch class " + std::to_string(ex.class_id) +
                                  " outside 1..5");
        PatchPrediction p = classify_patch(model, ex.patch);
        m.confusion[ex.class_id - 1][p.class_id - 1]++;
        if (p.class_id == ex.class_id) ++correct;
    }
    m.accuracy = (double)correct / examples.size();
    for (int k = 0; k < 5; ++k) {
        int tp = m.confusion[k][k], support = 0, predicted = 0;
        for (int j = 0; j < 5; ++j) {
            support += m.confusion[k][j];
            predicted += m.confusion[j][k];
        }
        const double prec = predicted ? (double)tp / predicted : 0.0;
        const double rec = support ? (double)tp / support : 0.0;
        const double f1 = (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        const double w = (double)support / examples.size();
        m.precision_weighted += w * prec;
        m.recall_weighted += w * rec;
        m.f1_weighted += w * f1;
        m.precision_macro += prec / 5;
        m.recall_macro += rec / 5;
        m.f1_macro += f1 / 5;
    }
    return m;
}

}  // namespace sarc
