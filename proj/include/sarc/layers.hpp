#pragma once

// Parameter-owning building blocks on top of the autodiff ops. Construction
// draws every initial value from one Rng in a fixed order, so two builds from
// the same seed are bit-identical. collect() registers parameters (and
// batch-norm running buffers) under dotted names for the optimizer and the
// checkpoint format.

#include <string>
#include <vector>

#include "sarc/autodiff.hpp"
#include "sarc/rng.hpp"

namespace sarc::nn {

template <class T>
struct ParamMap {
    std::vector<std::pair<std::string, ad::Var<T>>> params;
    std::vector<std::pair<std::string, Tensor<T>*>> buffers;

    void param(const std::string& name, const ad::Var<T>& v) { params.push_back({name, v}); }
    void buffer(const std::string& name, Tensor<T>* t) { buffers.push_back({name, t}); }
};

template <class T>
struct Linear {
    ad::Var<T> W, b;  // W is {in, out}
    bool has_bias = true;

    Linear() = default;
    Linear(int in, int out, Rng& rng, bool bias = true, T std = T(0.02)) : has_bias(bias) {
        W = ad::Var<T>::leaf(Tensor<T>::trunc_normal({in, out}, rng, std), true);
        if (bias) b = ad::Var<T>::leaf(Tensor<T>::zeros({out}), true);
    }

    ad::Var<T> operator()(const ad::Var<T>& x) const { return ad::linear(x, W, b); }

    void collect(const std::string& p, ParamMap<T>& m) {
        m.param(p + ".weight", W);
        if (has_bias) m.param(p + ".bias", b);
    }
};

template <class T>
struct LayerNorm {
    ad::Var<T> gamma, beta;
    T eps;

    LayerNorm() = default;
    explicit LayerNorm(int c, T eps_ = T(1e-6)) : eps(eps_) {
        gamma = ad::Var<T>::leaf(Tensor<T>::full({c}, T(1)), true);
        beta = ad::Var<T>::leaf(Tensor<T>::zeros({c}), true);
    }

    ad::Var<T> rows(const ad::Var<T>& x) const { return ad::layernorm_lastdim(x, gamma, beta, eps); }
    ad::Var<T> nchw(const ad::Var<T>& x) const { return ad::layernorm_nchw(x, gamma, beta, eps); }

    void collect(const std::string& p, ParamMap<T>& m) {
        m.param(p + ".gamma", gamma);
        m.param(p + ".beta", beta);
    }
};

template <class T>
struct Conv2d {
    ad::Var<T> W, b;  // W is {OC, C, k, k}
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int in, int out, int k, int stride_, int pad_, Rng& rng, T std = T(0.02))
        : stride(stride_), pad(pad_) {
        W = ad::Var<T>::leaf(Tensor<T>::trunc_normal({out, in, k, k}, rng, std), true);
        b = ad::Var<T>::leaf(Tensor<T>::zeros({out}), true);
    }

    ad::Var<T> operator()(const ad::Var<T>& x) const { return ad::conv2d(x, W, b, stride, pad); }

    void collect(const std::string& p, ParamMap<T>& m) {
        m.param(p + ".weight", W);
        m.param(p + ".bias", b);
    }
};

template <class T>
struct DepthwiseConv2d {
    ad::Var<T> W, b;  // W is {C, k, k}
    int pad = 0;

    DepthwiseConv2d() = default;
    DepthwiseConv2d(int c, int k, int pad_, Rng& rng, T std = T(0.02)) : pad(pad_) {
        W = ad::Var<T>::leaf(Tensor<T>::trunc_normal({c, k, k}, rng, std), true);
        b = ad::Var<T>::leaf(Tensor<T>::zeros({c}), true);
    }

    ad::Var<T> operator()(const ad::Var<T>& x) const { return ad::depthwise_conv2d(x, W, b, pad); }

    void collect(const std::string& p, ParamMap<T>& m) {
        m.param(p + ".weight", W);
        m.param(p + ".bias", b);
    }
};

template <class T>
struct BatchNorm {
    ad::Var<T> gamma, beta;
    ad::BatchNormState<T> state;

    BatchNorm() = default;
    explicit BatchNorm(int c) {
        gamma = ad::Var<T>::leaf(Tensor<T>::full({c}, T(1)), true);
        beta = ad::Var<T>::leaf(Tensor<T>::zeros({c}), true);
        state.running_mean = Tensor<T>::zeros({c});
        state.running_var = Tensor<T>::full({c}, T(1));
    }

    ad::Var<T> operator()(const ad::Var<T>& x, bool training) {
        return ad::batchnorm(x, gamma, beta, state, training);
    }

    void collect(const std::string& p, ParamMap<T>& m) {
        m.param(p + ".gamma", gamma);
        m.param(p + ".beta", beta);
        m.buffer(p + ".running_mean", &state.running_mean);
        m.buffer(p + ".running_var", &state.running_var);
    }
};

}  // namespace sarc::nn
