#pragma once

// Hierarchical convolutional stream: 4x4/stride-4 stem, four stages of
// depthwise-7x7 + inverted-bottleneck blocks with LayerScale, 2x2/stride-2
// downsampling between stages. At 224x224 input the stages emit 56/28/14/7.

#include <array>

#include "sarc/layers.hpp"

namespace sarc::nn {

struct ConvNeXtSpec {
    int in_channels = 3;
    std::array<int, 4> channels{24, 48, 96, 192};
    std::array<int, 4> depths{1, 1, 2, 1};
    float layerscale_eps = 1e-6f;
};

inline void validate_convnext_spec(const ConvNeXtSpec& s) {
    if (s.in_channels < 1) throw ConfigError("backbone: in_channels must be >= 1");
    for (int d : s.depths) {
        if (d < 1) throw ConfigError("backbone: stage depths must be >= 1");
    }
    for (int i = 0; i < 4; ++i) {
        if (s.channels[i] < 1) throw ConfigError("backbone: stage channels must be >= 1");
        if (i > 0 && s.channels[i] <= s.channels[i - 1]) {
            throw ConfigError("backbone: stage channels must be strictly increasing");
        }
    }
    if (s.layerscale_eps <= 0) throw ConfigError("backbone: layerscale epsilon must be > 0");
}

template <class T>
struct ConvNeXtBlock {
    DepthwiseConv2d<T> dw;   // 7x7, pad 3
    LayerNorm<T> norm;       // over channels, applied in token rows
    Linear<T> pw1, pw2;      // C -> 4C -> C
    ad::Var<T> layerscale;   // per-channel, init at epsilon

    ConvNeXtBlock() = default;
    ConvNeXtBlock(int c, T ls_eps, Rng& rng)
        : dw(c, 7, 3, rng), norm(c, T(1e-6)), pw1(c, 4 * c, rng), pw2(4 * c, c, rng) {
        layerscale = ad::Var<T>::leaf(Tensor<T>::full({c}, ls_eps), true);
    }

    ad::Var<T> forward(const ad::Var<T>& x) const {
        int N = x.val().dim(0), H = x.val().dim(2), W = x.val().dim(3);
        auto y = dw(x);
        auto rows = ad::nchw_to_rows(y);
        rows = norm.rows(rows);
        rows = pw1(rows);
        rows = ad::gelu(rows);
        rows = pw2(rows);
        rows = ad::mul_lastdim(rows, layerscale);
        return ad::add(x, ad::rows_to_nchw(rows, N, H, W));
    }

    void collect(const std::string& p, ParamMap<T>& m) {
        dw.collect(p + ".dw", m);
        norm.collect(p + ".norm", m);
        pw1.collect(p + ".pw1", m);
        pw2.collect(p + ".pw2", m);
        m.param(p + ".layerscale", layerscale);
    }
};

template <class T>
struct ConvNeXtStream {
    ConvNeXtSpec spec;
    Conv2d<T> stem;
    LayerNorm<T> stem_norm;
    std::array<LayerNorm<T>, 3> down_norm;
    std::array<Conv2d<T>, 3> down_conv;
    std::array<std::vector<ConvNeXtBlock<T>>, 4> stages;

    ConvNeXtStream() = default;
    ConvNeXtStream(const ConvNeXtSpec& s, Rng& rng) : spec(s) {
        validate_convnext_spec(s);
        stem = Conv2d<T>(s.in_channels, s.channels[0], 4, 4, 0, rng);
        stem_norm = LayerNorm<T>(s.channels[0], T(1e-6));
        for (int i = 0; i < 4; ++i) {
            for (int d = 0; d < s.depths[i]; ++d) {
                stages[i].emplace_back(s.channels[i], T(s.layerscale_eps), rng);
            }
            if (i < 3) {
                down_norm[i] = LayerNorm<T>(s.channels[i], T(1e-6));
                down_conv[i] = Conv2d<T>(s.channels[i], s.channels[i + 1], 2, 2, 0, rng);
            }
        }
    }

    std::array<ad::Var<T>, 4> forward(const ad::Var<T>& x) const {
        std::array<ad::Var<T>, 4> out;
        auto h = stem_norm.nchw(stem(x));
        for (int i = 0; i < 4; ++i) {
            if (i > 0) h = down_conv[i - 1](down_norm[i - 1].nchw(h));
            for (const auto& blk : stages[i]) h = blk.forward(h);
            out[i] = h;
        }
        return out;
    }

    void collect(const std::string& p, ParamMap<T>& m) {
        stem.collect(p + ".stem", m);
        stem_norm.collect(p + ".stem_norm", m);
        for (int i = 0; i < 4; ++i) {
            if (i > 0) {
                down_norm[i - 1].collect(p + ".down" + std::to_string(i) + ".norm", m);
                down_conv[i - 1].collect(p + ".down" + std::to_string(i) + ".conv", m);
            }
            for (size_t d = 0; d < stages[i].size(); ++d) {
                stages[i][d].collect(
                    p + ".stage" + std::to_string(i + 1) + ".block" + std::to_string(d), m);
            }
        }
    }
};

}  // namespace sarc::nn
