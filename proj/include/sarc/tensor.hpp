#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sarc/errors.hpp"
#include "sarc/rng.hpp"

namespace sarc {

inline int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

// Dense row-major tensor. Plain value type; all layout logic lives in the
// kernels that consume it.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(shape_numel(shape)) {}
    Tensor(std::vector<int> s, T fill) : shape(std::move(s)), v(shape_numel(shape), fill) {}

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T val) { return Tensor(std::move(s), val); }

    static Tensor randn(std::vector<int> s, Rng& rng, T sigma = T(1)) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = static_cast<T>(rng.normal()) * sigma;
        return t;
    }

    static Tensor trunc_normal(std::vector<int> s, Rng& rng, T sigma) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = static_cast<T>(rng.trunc_normal(sigma));
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(T val) { std::fill(v.begin(), v.end(), val); }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

template <class T>
void check_shape(const Tensor<T>& t, const std::vector<int>& expect, const char* what) {
    if (t.shape != expect) {
        throw ShapeError(std::string(what) + ": expected " + shape_str(expect) + ", got " +
                         shape_str(t.shape));
    }
}

}  // namespace sarc
