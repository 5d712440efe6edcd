#pragma once

// The dual-stream regression model: convolutional stream on the raw image,
// windowed-attention stream on the 3-channel representation stack, per-stage
// fusion (add -> 3x3 conv -> 1x1 conv -> BN -> ReLU -> maxpool to 7x7),
// four-stage concatenation, global average pooling, and an MLP head with
// batch norm producing one raw score per sample. Ablation switches select
// single streams, drop the fusion blocks, drop post-processing, or zero
// individual stack channels.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "sarc/convnext.hpp"
#include "sarc/swin.hpp"

namespace sarc {

enum class AblationVariant {
    full,
    convnext_only,
    swin_only,
    no_fusion_blocks,
    no_postprocessing,
    only_fft,
    only_pattern,
    only_gradient,
};

inline const std::vector<std::pair<std::string, AblationVariant>>& ablation_names() {
    static const std::vector<std::pair<std::string, AblationVariant>> names = {
        {"full", AblationVariant::full},
        {"convnext_only", AblationVariant::convnext_only},
        {"swin_only", AblationVariant::swin_only},
        {"no_fusion_blocks", AblationVariant::no_fusion_blocks},
        {"no_postprocessing", AblationVariant::no_postprocessing},
        {"only_fft", AblationVariant::only_fft},
        {"only_pattern", AblationVariant::only_pattern},
        {"only_gradient", AblationVariant::only_gradient},
    };
    return names;
}

inline std::string ablation_name(AblationVariant v) {
    for (const auto& [n, var] : ablation_names()) {
        if (var == v) return n;
    }
    return "?";
}

inline AblationVariant parse_ablation(const std::string& s) {
    std::string valid;
    for (const auto& [n, var] : ablation_names()) {
        if (n == s) return var;
        valid += valid.empty() ? n : ", " + n;
    }
    throw ConfigError("unknown ablation variant '" + s + "' (valid: " + valid + ")");
}

struct DSarcNetConfig {
    std::string preset = "toy";
    std::array<int, 4> channels{24, 48, 96, 192};
    std::array<int, 4> depths_a{1, 1, 2, 1};  // convolutional stream
    std::array<int, 4> depths_b{1, 1, 2, 1};  // attention stream
    std::array<int, 4> heads{2, 2, 4, 4};
    int window = 7;
    float layerscale_eps = 1e-6f;
    std::vector<int> head_widths{512, 64};
    AblationVariant ablation = AblationVariant::full;
};

inline DSarcNetConfig dsarcnet_preset(const std::string& name) {
    DSarcNetConfig c;
    if (name == "toy") return c;
    if (name == "paper") {
        c.preset = "paper";
        c.channels = {96, 192, 384, 768};
        c.depths_a = {3, 3, 9, 3};
        c.depths_b = {2, 2, 6, 2};
        c.heads = {3, 6, 12, 24};
        return c;
    }
    throw ConfigError("unknown model preset '" + name + "' (valid: toy, paper)");
}

// Returns the config reconfigured for one architectural variant.
inline DSarcNetConfig configure_ablation(DSarcNetConfig cfg, AblationVariant v) {
    cfg.ablation = v;
    return cfg;
}

inline DSarcNetConfig configure_ablation(DSarcNetConfig cfg, const std::string& name) {
    return configure_ablation(std::move(cfg), parse_ablation(name));
}

struct ScorePrediction {
    double raw = 0;
    double clamped = 0;
};

inline double clamp_score(double raw) { return std::min(5.0, std::max(1.0, raw)); }

namespace nn {

template <class T>
struct FusionBlock {
    bool postproc = true;
    int pool_k = 1;
    Conv2d<T> conv3, conv1;
    BatchNorm<T> bn;

    FusionBlock() = default;
    FusionBlock(int c, int pool_k_, bool postproc_, Rng& rng)
        : postproc(postproc_), pool_k(pool_k_) {
        if (postproc) {
            conv3 = Conv2d<T>(c, c, 3, 1, 1, rng);
            conv1 = Conv2d<T>(c, c, 1, 1, 0, rng);
            bn = BatchNorm<T>(c);
        }
    }

    // Either operand may be undefined (single-stream variants).
    ad::Var<T> forward(const ad::Var<T>& a, const ad::Var<T>& b, bool training) {
        ad::Var<T> s;
        if (a.defined() && b.defined()) {
            if (!a.val().same_shape(b.val())) throw ShapeError("fusion: stage shape mismatch");
            s = ad::add(a, b);
        } else {
            s = a.defined() ? a : b;
        }
        if (postproc) {
            s = conv3(s);
            s = conv1(s);
            s = bn(s, training);
            s = ad::relu(s);
        }
        if (pool_k > 1) s = ad::maxpool2d(s, pool_k, pool_k);
        return s;
    }

    void collect(const std::string& p, ParamMap<T>& m) {
        if (!postproc) return;
        conv3.collect(p + ".conv3", m);
        conv1.collect(p + ".conv1", m);
        bn.collect(p + ".bn", m);
    }
};

template <class T>
class DualStreamModel {
  public:
    DSarcNetConfig cfg;
    bool training = true;

    DualStreamModel() = default;

    DualStreamModel(const DSarcNetConfig& cfg_, uint64_t seed) : cfg(cfg_) {
        Rng rng(seed);
        bool want_a = cfg.ablation != AblationVariant::swin_only;
        bool want_b = cfg.ablation != AblationVariant::convnext_only;
        if (want_a) {
            nn::ConvNeXtSpec sa;
            sa.in_channels = 3;
            sa.channels = cfg.channels;
            sa.depths = cfg.depths_a;
            sa.layerscale_eps = cfg.layerscale_eps;
            stream_a_ = std::make_unique<ConvNeXtStream<T>>(sa, rng);
        }
        if (want_b) {
            nn::SwinSpec sb;
            sb.in_channels = 3;
            sb.channels = cfg.channels;
            sb.depths = cfg.depths_b;
            sb.heads = cfg.heads;
            sb.window = cfg.window;
            stream_b_ = std::make_unique<SwinStream<T>>(sb, rng);
        }
        int head_in = 0;
        if (cfg.ablation == AblationVariant::no_fusion_blocks) {
            head_in = cfg.channels[3];  // single stage-4 combination, no blocks
        } else {
            bool postproc = cfg.ablation != AblationVariant::no_postprocessing;
            for (int i = 0; i < 4; ++i) {
                fusion_.emplace_back(cfg.channels[i], 8 >> i, postproc, rng);
                head_in += cfg.channels[i];
            }
        }
        int in = head_in;
        for (int w : cfg.head_widths) {
            head_lin_.emplace_back(in, w, rng);
            head_bn_.emplace_back(w);
            in = w;
        }
        head_out_ = Linear<T>(in, 1, rng);
        // Start the raw score at the middle of the 1..5 scale so early epochs
        // fit structure instead of the global offset.
        head_out_.b.val().v[0] = T(3);
    }

    // raw and stack: {N,3,224,224}. Returns raw (unclamped) scores {N}.
    ad::Var<T> forward(const Tensor<T>& raw, const Tensor<T>& stack) {
        check_inputs(raw, stack);
        ad::Var<T> xa, xb;
        if (stream_a_) xa = ad::Var<T>::leaf(raw);
        if (stream_b_) xb = ad::Var<T>::leaf(mask_stack_channels(stack));

        std::array<ad::Var<T>, 4> fa, fb;
        if (stream_a_) fa = stream_a_->forward(xa);
        if (stream_b_) fb = stream_b_->forward(xb);

        ad::Var<T> pooled;
        if (cfg.ablation == AblationVariant::no_fusion_blocks) {
            auto s = (stream_a_ && stream_b_) ? ad::add(fa[3], fb[3])
                                              : (stream_a_ ? fa[3] : fb[3]);
            pooled = ad::global_avg_pool(s);
        } else {
            std::vector<ad::Var<T>> parts;
            for (int i = 0; i < 4; ++i) {
                auto fused = fusion_[i].forward(fa[i], fb[i], training);
                parts.push_back(ad::global_avg_pool(fused));
            }
            // Channel-order concatenation of the four pooled stages is the
            // same result as concatenating the 7x7 maps and pooling once.
            pooled = ad::concat_cols(parts);
        }
        auto h = pooled;
        for (size_t i = 0; i < head_lin_.size(); ++i) {
            h = head_lin_[i](h);
            h = head_bn_[i](h, training);
            h = ad::relu(h);
        }
        h = head_out_(h);
        return ad::reshape(h, {raw.dim(0)});
    }

    std::vector<ScorePrediction> predict(const Tensor<T>& raw, const Tensor<T>& stack) {
        ad::NoGradGuard ng;
        bool was_training = training;
        training = false;
        auto out = forward(raw, stack);
        training = was_training;
        std::vector<ScorePrediction> preds(out.val().numel());
        for (size_t i = 0; i < preds.size(); ++i) {
            preds[i].raw = (double)out.val().v[i];
            preds[i].clamped = clamp_score(preds[i].raw);
        }
        return preds;
    }

    ParamMap<T> named_params() {
        ParamMap<T> m;
        if (stream_a_) stream_a_->collect("stream_a", m);
        if (stream_b_) stream_b_->collect("stream_b", m);
        for (size_t i = 0; i < fusion_.size(); ++i) {
            fusion_[i].collect("fusion" + std::to_string(i + 1), m);
        }
        for (size_t i = 0; i < head_lin_.size(); ++i) {
            head_lin_[i].collect("head.lin" + std::to_string(i), m);
            head_bn_[i].collect("head.bn" + std::to_string(i), m);
        }
        head_out_.collect("head.out", m);
        return m;
    }

    bool has_stream_a() const { return (bool)stream_a_; }
    bool has_stream_b() const { return (bool)stream_b_; }

  private:
    std::unique_ptr<ConvNeXtStream<T>> stream_a_;
    std::unique_ptr<SwinStream<T>> stream_b_;
    std::vector<FusionBlock<T>> fusion_;
    std::vector<Linear<T>> head_lin_;
    std::vector<BatchNorm<T>> head_bn_;
    Linear<T> head_out_;

    void check_inputs(const Tensor<T>& raw, const Tensor<T>& stack) const {
        auto check = [](const Tensor<T>& t, const char* what) {
            if (t.ndim() != 4 || t.dim(1) != 3 || t.dim(2) != 224 || t.dim(3) != 224) {
                throw ShapeError(std::string(what) + " must be {N,3,224,224}, got " +
                                 shape_str(t.shape));
            }
            for (T v : t.v) {
                if (!std::isfinite((double)v)) {
                    throw ValidationError(std::string(what) + " contains a non-finite value");
                }
            }
        };
        check(raw, "raw input");
        check(stack, "stack input");
        if (raw.dim(0) != stack.dim(0)) throw ShapeError("raw/stack batch size mismatch");
    }

    Tensor<T> mask_stack_channels(const Tensor<T>& stack) const {
        int keep;
        switch (cfg.ablation) {
            case AblationVariant::only_fft: keep = 0; break;
            case AblationVariant::only_pattern: keep = 1; break;
            case AblationVariant::only_gradient: keep = 2; break;
            default: return stack;
        }
        Tensor<T> out = stack;
        int N = stack.dim(0);
        int64_t HW = (int64_t)stack.dim(2) * stack.dim(3);
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < 3; ++c) {
                if (c == keep) continue;
                T* base = out.data() + ((int64_t)n * 3 + c) * HW;
                std::fill(base, base + HW, T(0));
            }
        }
        return out;
    }
};

}  // namespace nn
}  // namespace sarc
