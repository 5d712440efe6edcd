#pragma once

// Windowed-attention stream: 4x4 patch embedding, four stages of window
// attention blocks (alternating blocks use a cyclically shifted window grid
// with an additive mask), 2x2 patch merging between stages. Stage geometry
// matches the convolutional stream: 56/28/14/7 at 224x224 input.

#include <array>
#include <memory>

#include "sarc/layers.hpp"

namespace sarc::nn {

struct SwinSpec {
    int in_channels = 3;
    std::array<int, 4> channels{24, 48, 96, 192};  // must double stage to stage
    std::array<int, 4> depths{1, 1, 2, 1};
    std::array<int, 4> heads{2, 2, 4, 4};
    int window = 7;
    int input_size = 224;
};

inline void validate_swin_spec(const SwinSpec& s) {
    if (s.in_channels < 1) throw ConfigError("attention stream: in_channels must be >= 1");
    if (s.window < 2) throw ConfigError("attention stream: window must be >= 2");
    if (s.input_size % 4 != 0) throw ConfigError("attention stream: input size must divide by 4");
    for (int i = 0; i < 4; ++i) {
        if (s.depths[i] < 1) throw ConfigError("attention stream: depths must be >= 1");
        if (s.heads[i] < 1) throw ConfigError("attention stream: heads must be >= 1");
        if (i > 0 && s.channels[i] != 2 * s.channels[i - 1]) {
            throw ConfigError("attention stream: channels must double each stage (patch merging)");
        }
        if (s.channels[i] % s.heads[i] != 0) {
            throw ConfigError("attention stream: channels must divide by heads");
        }
        int res = s.input_size / (4 << i);
        if (res % s.window != 0) {
            throw ConfigError("attention stream: stage resolution " + std::to_string(res) +
                              " not divisible by window " + std::to_string(s.window));
        }
    }
}

// token t=(y*win+x) vs t'=(y'*win+x') looks up (y-y'+win-1)*(2win-1)+(x-x'+win-1).
inline std::shared_ptr<std::vector<int>> relative_position_index(int win) {
    int L = win * win;
    auto idx = std::make_shared<std::vector<int>>((size_t)L * L);
    for (int a = 0; a < L; ++a) {
        int ya = a / win, xa = a % win;
        for (int b = 0; b < L; ++b) {
            int yb = b / win, xb = b % win;
            (*idx)[(size_t)a * L + b] = (ya - yb + win - 1) * (2 * win - 1) + (xa - xb + win - 1);
        }
    }
    return idx;
}

// Additive mask for shifted windows: tokens from different pre-shift regions
// must not attend to each other (-100 before softmax).
template <class T>
std::shared_ptr<Tensor<T>> make_shift_mask(int H, int W, int win, int shift) {
    std::vector<int> img((size_t)H * W);
    int cnt = 0;
    int hb[4] = {0, H - win, H - shift, H};
    int wb[4] = {0, W - win, W - shift, W};
    for (int hs = 0; hs < 3; ++hs) {
        for (int ws = 0; ws < 3; ++ws) {
            for (int h = hb[hs]; h < hb[hs + 1]; ++h) {
                for (int w = wb[ws]; w < wb[ws + 1]; ++w) img[(size_t)h * W + w] = cnt;
            }
            ++cnt;
        }
    }
    int nWy = H / win, nWx = W / win, L = win * win;
    auto mask = std::make_shared<Tensor<T>>(std::vector<int>{nWy * nWx, L, L});
    for (int wy = 0; wy < nWy; ++wy) {
        for (int wx = 0; wx < nWx; ++wx) {
            std::vector<int> ids(L);
            for (int i = 0; i < L; ++i) {
                ids[i] = img[(size_t)(wy * win + i / win) * W + wx * win + i % win];
            }
            T* m = mask->data() + (int64_t)(wy * nWx + wx) * L * L;
            for (int i = 0; i < L; ++i) {
                for (int j = 0; j < L; ++j) {
                    m[(int64_t)i * L + j] = ids[i] == ids[j] ? T(0) : T(-100);
                }
            }
        }
    }
    return mask;
}

template <class T>
struct WindowAttention {
    int dim = 0, heads = 1, win = 7;
    Linear<T> qkv, proj;
    ad::Var<T> bias_table;  // {(2win-1)^2, heads}
    std::shared_ptr<std::vector<int>> rel_index;

    WindowAttention() = default;
    WindowAttention(int dim_, int heads_, int win_, Rng& rng)
        : dim(dim_), heads(heads_), win(win_), qkv(dim_, 3 * dim_, rng), proj(dim_, dim_, rng) {
        int t = (2 * win - 1) * (2 * win - 1);
        bias_table = ad::Var<T>::leaf(Tensor<T>::trunc_normal({t, heads}, rng, T(0.02)), true);
        rel_index = relative_position_index(win);
    }

    // x: {G*L, C} token rows grouped per window.
    ad::Var<T> forward(const ad::Var<T>& x, int G, const std::shared_ptr<Tensor<T>>& mask) const {
        int L = win * win;
        int hd = dim / heads;
        T scale_ = T(1) / std::sqrt(T(hd));
        auto qkv_rows = qkv(x);
        auto q = ad::slice_cols(qkv_rows, 0, dim);
        auto k = ad::slice_cols(qkv_rows, dim, dim);
        auto v = ad::slice_cols(qkv_rows, 2 * dim, dim);
        auto logits = ad::attn_scores(q, k, G, L, heads, scale_);
        logits = ad::add_position_bias(logits, bias_table,
                                       std::shared_ptr<const std::vector<int>>(rel_index), G, L,
                                       heads);
        if (mask) {
            logits = ad::add_window_mask(logits, std::shared_ptr<const Tensor<T>>(mask), G, L,
                                         heads);
        }
        auto p = ad::softmax_rows(logits);
        return proj(ad::attn_apply(p, v, G, L, heads));
    }

    void collect(const std::string& p, ParamMap<T>& m) {
        qkv.collect(p + ".qkv", m);
        proj.collect(p + ".proj", m);
        m.param(p + ".bias_table", bias_table);
    }
};

template <class T>
struct SwinBlock {
    int H = 0, W = 0, win = 7, shift = 0;
    LayerNorm<T> norm1, norm2;
    WindowAttention<T> attn;
    Linear<T> mlp1, mlp2;
    std::shared_ptr<Tensor<T>> mask;  // only when shifted

    SwinBlock() = default;
    SwinBlock(int dim, int H_, int W_, int heads, int win_, int shift_, Rng& rng)
        : H(H_), W(W_), win(win_), shift(shift_),
          norm1(dim, T(1e-5)),
          norm2(dim, T(1e-5)),
          attn(dim, heads, win_, rng),
          mlp1(dim, 4 * dim, rng),
          mlp2(4 * dim, dim, rng) {
        if (shift > 0) mask = make_shift_mask<T>(H, W, win, shift);
    }

    // x: {N*H*W, C} token rows.
    ad::Var<T> forward(const ad::Var<T>& x, int N) const {
        int G = N * (H / win) * (W / win);
        auto y = norm1.rows(x);
        if (shift > 0) y = ad::roll_rows(y, N, H, W, shift, shift);
        y = ad::window_partition(y, N, H, W, win);
        y = attn.forward(y, G, mask);
        y = ad::window_reverse(y, N, H, W, win);
        if (shift > 0) y = ad::roll_rows(y, N, H, W, -shift, -shift);
        auto h = ad::add(x, y);
        auto z = norm2.rows(h);
        z = mlp1(z);
        z = ad::gelu(z);
        z = mlp2(z);
        return ad::add(h, z);
    }

    void collect(const std::string& p, ParamMap<T>& m) {
        norm1.collect(p + ".norm1", m);
        attn.collect(p + ".attn", m);
        norm2.collect(p + ".norm2", m);
        mlp1.collect(p + ".mlp1", m);
        mlp2.collect(p + ".mlp2", m);
    }
};

template <class T>
struct PatchMerging {
    LayerNorm<T> norm;     // over 4C
    Linear<T> reduction;   // 4C -> 2C, no bias

    PatchMerging() = default;
    PatchMerging(int c, Rng& rng) : norm(4 * c, T(1e-5)), reduction(4 * c, 2 * c, rng, false) {}

    ad::Var<T> forward(const ad::Var<T>& x, int N, int H, int W) const {
        auto y = ad::space_to_depth2(x, N, H, W);
        return reduction(norm.rows(y));
    }

    void collect(const std::string& p, ParamMap<T>& m) {
        norm.collect(p + ".norm", m);
        reduction.collect(p + ".reduction", m);
    }
};

template <class T>
struct SwinStream {
    SwinSpec spec;
    Conv2d<T> patch_embed;
    LayerNorm<T> embed_norm;
    std::array<std::vector<SwinBlock<T>>, 4> stages;
    std::array<PatchMerging<T>, 3> merges;

    SwinStream() = default;
    SwinStream(const SwinSpec& s, Rng& rng) : spec(s) {
        validate_swin_spec(s);
        patch_embed = Conv2d<T>(s.in_channels, s.channels[0], 4, 4, 0, rng);
        embed_norm = LayerNorm<T>(s.channels[0], T(1e-5));
        for (int i = 0; i < 4; ++i) {
            int res = s.input_size / (4 << i);
            for (int d = 0; d < s.depths[i]; ++d) {
                // Alternating blocks shift unless the window spans the map.
                int shift = (d % 2 == 1 && res > s.window) ? s.window / 2 : 0;
                stages[i].emplace_back(s.channels[i], res, res, s.heads[i], s.window, shift, rng);
            }
            if (i < 3) merges[i] = PatchMerging<T>(s.channels[i], rng);
        }
    }

    // x: {N,3,224,224}; returns per-stage NCHW feature maps.
    std::array<ad::Var<T>, 4> forward(const ad::Var<T>& x) const {
        int N = x.val().dim(0);
        std::array<ad::Var<T>, 4> out;
        auto rows = embed_norm.rows(ad::nchw_to_rows(patch_embed(x)));
        for (int i = 0; i < 4; ++i) {
            int res = spec.input_size / (4 << i);
            if (i > 0) rows = merges[i - 1].forward(rows, N, res * 2, res * 2);
            for (const auto& blk : stages[i]) rows = blk.forward(rows, N);
            out[i] = ad::rows_to_nchw(rows, N, res, res);
        }
        return out;
    }

    void collect(const std::string& p, ParamMap<T>& m) {
        patch_embed.collect(p + ".patch_embed", m);
        embed_norm.collect(p + ".embed_norm", m);
        for (int i = 0; i < 4; ++i) {
            if (i > 0) merges[i - 1].collect(p + ".merge" + std::to_string(i), m);
            for (size_t d = 0; d < stages[i].size(); ++d) {
                stages[i][d].collect(
                    p + ".stage" + std::to_string(i + 1) + ".block" + std::to_string(d), m);
            }
        }
    }
};

}  // namespace sarc::nn
