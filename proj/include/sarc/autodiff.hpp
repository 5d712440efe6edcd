#pragma once

// Tape-based reverse-mode autodiff over Tensor<T>. Templating on the scalar
// lets training run in float while gradient checks run the identical graph in
// double. Backward implementations follow the same determinism rule as the
// kernels: each gradient element is accumulated by exactly one thread in a
// fixed order.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "sarc/errors.hpp"
#include "sarc/kernels.hpp"
#include "sarc/tensor.hpp"

namespace sarc::ad {

inline thread_local bool g_grad_enabled = true;

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
    ~NoGradGuard() { g_grad_enabled = prev; }
};

template <class T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated on first contribution
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node*)> backward;

    void ensure_grad() {
        if (grad.v.empty()) {
            grad.shape = val.shape;
            grad.v.assign(val.v.size(), T(0));
        }
    }
};

template <class T>
class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

    static Var leaf(Tensor<T> value, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(value);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    bool defined() const { return (bool)n_; }
    Tensor<T>& val() { return n_->val; }
    const Tensor<T>& val() const { return n_->val; }
    Tensor<T>& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    bool has_grad() const { return n_ && !n_->grad.v.empty(); }
    void clear_grad() {
        if (n_) {
            n_->grad.shape.clear();
            n_->grad.v.clear();
        }
    }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    std::shared_ptr<Node<T>> node() const { return n_; }

  private:
    std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>*)> backward) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(value);
    bool rg = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) rg = rg || (p.defined() && p.node()->requires_grad);
    }
    n->requires_grad = rg;
    if (rg) {
        for (const auto& p : parents) {
            if (p.defined()) n->parents.push_back(p.node());
        }
        n->backward = std::move(backward);
    }
    return Var<T>(std::move(n));
}

template <class T>
bool wants(const Var<T>& v) {
    return v.defined() && v.node()->requires_grad;
}

}  // namespace detail

// Runs reverse accumulation from a scalar root.
template <class T>
void backward(const Var<T>& root) {
    Node<T>* r = root.node().get();
    if (!r || !r->requires_grad) throw TrainError("backward called on a non-differentiable value");
    if (r->val.numel() != 1) throw TrainError("backward root must be a scalar");
    r->ensure_grad();
    r->grad.v[0] = T(1);

    // Iterative post-order DFS along parent edges; reversed post-order puts
    // every consumer before its producers.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack{{r, 0}};
    seen.insert(r);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward && !n->grad.v.empty()) n->backward(n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a.val().same_shape(b.val())) throw ShapeError("add: shape mismatch");
    Tensor<T> out = a.val();
    const T* bv = b.val().data();
    for (int64_t i = 0; i < out.numel(); ++i) out.v[i] += bv[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>* self) {
        const T* g = self->grad.data();
        int64_t n = self->grad.numel();
        if (an->requires_grad) {
            an->ensure_grad();
            T* da = an->grad.data();
            for (int64_t i = 0; i < n; ++i) da[i] += g[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            T* db = bn->grad.data();
            for (int64_t i = 0; i < n; ++i) db[i] += g[i];
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
    Tensor<T> out = a.val();
    for (auto& x : out.v) x *= c;
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {a}, [an, c](Node<T>* self) {
        an->ensure_grad();
        const T* g = self->grad.data();
        T* da = an->grad.data();
        for (int64_t i = 0; i < self->grad.numel(); ++i) da[i] += c * g[i];
    });
}

template <class T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = a.val();
    for (auto& x : out.v) x = x > T(0) ? x : T(0);
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {a}, [an](Node<T>* self) {
        an->ensure_grad();
        const T* g = self->grad.data();
        const T* x = an->val.data();
        T* da = an->grad.data();
        for (int64_t i = 0; i < self->grad.numel(); ++i) {
            if (x[i] > T(0)) da[i] += g[i];
        }
    });
}

// Exact GELU: x * Phi(x) with Phi the standard normal CDF.
template <class T>
Var<T> gelu(const Var<T>& a) {
    constexpr T kInvSqrt2 = T(0.7071067811865475244);
    Tensor<T> out = a.val();
    for (auto& x : out.v) x = T(0.5) * x * (T(1) + std::erf(x * kInvSqrt2));
    auto an = a.node();
    return detail::make_op<T>(std::move(out), {a}, [an](Node<T>* self) {
        constexpr T kInvSqrt2pi = T(0.3989422804014326779);
        an->ensure_grad();
        const T* g = self->grad.data();
        const T* x = an->val.data();
        T* da = an->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < self->grad.numel(); ++i) {
            T cdf = T(0.5) * (T(1) + std::erf(x[i] * T(0.7071067811865475244)));
            T pdf = kInvSqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
            da[i] += g[i] * (cdf + x[i] * pdf);
        }
    });
}

// ---------------------------------------------------------------------------
// Row-matrix ops: tensors treated as {R, C} with the feature axis last.
// ---------------------------------------------------------------------------

namespace detail {
template <class T>
std::pair<int64_t, int> rows_cols(const Tensor<T>& t) {
    if (t.ndim() < 1) throw ShapeError("expected a matrix-like tensor");
    int C = t.dim(t.ndim() - 1);
    return {t.numel() / C, C};
}
}  // namespace detail

template <class T>
Var<T> add_bias(const Var<T>& x, const Var<T>& b) {
    auto [R, C] = detail::rows_cols(x.val());
    check_shape(b.val(), {C}, "add_bias bias");
    Tensor<T> out = x.val();
    const T* bv = b.val().data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < R; ++r) {
        T* row = out.data() + r * C;
        for (int c = 0; c < C; ++c) row[c] += bv[c];
    }
    auto xn = x.node(), bn = b.node();
    int64_t Rl = R;
    int Cl = C;
    return detail::make_op<T>(std::move(out), {x, b}, [xn, bn, Rl, Cl](Node<T>* self) {
        const T* g = self->grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < self->grad.numel(); ++i) dx[i] += g[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            T* db = bn->grad.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < Cl; ++c) {
                T acc = 0;
                for (int64_t r = 0; r < Rl; ++r) acc += g[r * Cl + c];
                db[c] += acc;
            }
        }
    });
}

// Per-feature scaling of the last axis (LayerScale): y[r,c] = x[r,c] * s[c].
template <class T>
Var<T> mul_lastdim(const Var<T>& x, const Var<T>& s) {
    auto [R, C] = detail::rows_cols(x.val());
    check_shape(s.val(), {C}, "mul_lastdim scale");
    Tensor<T> out = x.val();
    const T* sv = s.val().data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < R; ++r) {
        T* row = out.data() + r * C;
        for (int c = 0; c < C; ++c) row[c] *= sv[c];
    }
    auto xn = x.node(), sn = s.node();
    int64_t Rl = R;
    int Cl = C;
    return detail::make_op<T>(std::move(out), {x, s}, [xn, sn, Rl, Cl](Node<T>* self) {
        const T* g = self->grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            const T* sv = sn->val.data();
            T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t r = 0; r < Rl; ++r) {
                for (int c = 0; c < Cl; ++c) dx[r * Cl + c] += g[r * Cl + c] * sv[c];
            }
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            const T* xv = xn->val.data();
            T* ds = sn->grad.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < Cl; ++c) {
                T acc = 0;
                for (int64_t r = 0; r < Rl; ++r) acc += g[r * Cl + c] * xv[r * Cl + c];
                ds[c] += acc;
            }
        }
    });
}

// y = x @ W (+ b). x: {R, IN} (trailing axis IN), W: {IN, OUT}.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& W, const Var<T>& b = {}) {
    auto [R, IN] = detail::rows_cols(x.val());
    if (W.val().ndim() != 2 || W.val().dim(0) != IN) {
        throw ShapeError("linear: weight shape " + shape_str(W.val().shape) +
                         " does not match input " + shape_str(x.val().shape));
    }
    int OUT = W.val().dim(1);
    std::vector<int> out_shape = x.val().shape;
    out_shape.back() = OUT;
    Tensor<T> out(out_shape);
    kernels::gemm<T>(false, false, (int)R, OUT, IN, T(1), x.val().data(), IN, W.val().data(),
                     OUT, T(0), out.data(), OUT);
    if (b.defined()) {
        check_shape(b.val(), {OUT}, "linear bias");
        const T* bv = b.val().data();
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < R; ++r) {
            T* row = out.data() + r * OUT;
            for (int c = 0; c < OUT; ++c) row[c] += bv[c];
        }
    }
    auto xn = x.node(), wn = W.node();
    auto bn = b.defined() ? b.node() : nullptr;
    int64_t Rl = R;
    int INl = IN, OUTl = OUT;
    return detail::make_op<T>(std::move(out), {x, W, b}, [=](Node<T>* self) {
        const T* g = self->grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            // dx = g @ W^T
            kernels::gemm<T>(false, true, (int)Rl, INl, OUTl, T(1), g, OUTl, wn->val.data(),
                             OUTl, T(1), xn->grad.data(), INl);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            // dW = x^T @ g
            kernels::gemm<T>(true, false, INl, OUTl, (int)Rl, T(1), xn->val.data(), INl, g,
                             OUTl, T(1), wn->grad.data(), OUTl);
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            T* db = bn->grad.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < OUTl; ++c) {
                T acc = 0;
                for (int64_t r = 0; r < Rl; ++r) acc += g[r * OUTl + c];
                db[c] += acc;
            }
        }
    });
}

template <class T>
Var<T> reshape(const Var<T>& x, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != x.val().numel()) {
        throw ShapeError("reshape: element count mismatch " + shape_str(x.val().shape) + " -> " +
                         shape_str(new_shape));
    }
    Tensor<T> out;
    out.shape = std::move(new_shape);
    out.v = x.val().v;
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x}, [xn](Node<T>* self) {
        xn->ensure_grad();
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < self->grad.numel(); ++i) dx[i] += g[i];
    });
}

template <class T>
Var<T> slice_cols(const Var<T>& x, int c0, int len) {
    auto [R, C] = detail::rows_cols(x.val());
    if (c0 < 0 || c0 + len > C) throw ShapeError("slice_cols out of range");
    std::vector<int> out_shape = x.val().shape;
    out_shape.back() = len;
    Tensor<T> out(out_shape);
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < R; ++r) {
        const T* src = x.val().data() + r * C + c0;
        std::copy(src, src + len, out.data() + r * len);
    }
    auto xn = x.node();
    int64_t Rl = R;
    int Cl = C;
    return detail::make_op<T>(std::move(out), {x}, [xn, Rl, Cl, c0, len](Node<T>* self) {
        xn->ensure_grad();
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < Rl; ++r) {
            for (int c = 0; c < len; ++c) dx[r * Cl + c0 + c] += g[r * len + c];
        }
    });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input");
    int64_t R = detail::rows_cols(xs[0].val()).first;
    int Ctot = 0;
    for (const auto& x : xs) {
        auto [r, c] = detail::rows_cols(x.val());
        if (r != R) throw ShapeError("concat_cols: row mismatch");
        Ctot += c;
    }
    std::vector<int> out_shape = xs[0].val().shape;
    out_shape.back() = Ctot;
    Tensor<T> out(out_shape);
    int at = 0;
    std::vector<int> offs;
    for (const auto& x : xs) {
        int c = x.val().dim(x.val().ndim() - 1);
        offs.push_back(at);
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < R; ++r) {
            std::copy(x.val().data() + r * c, x.val().data() + (r + 1) * c,
                      out.data() + r * Ctot + at);
        }
        at += c;
    }
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    return detail::make_op<T>(std::move(out), xs, [nodes, offs, Ctot, R](Node<T>* self) {
        const T* g = self->grad.data();
        for (size_t k = 0; k < nodes.size(); ++k) {
            if (!nodes[k]->requires_grad) continue;
            nodes[k]->ensure_grad();
            int c = nodes[k]->val.dim(nodes[k]->val.ndim() - 1);
            T* dx = nodes[k]->grad.data();
            int off = offs[k];
#pragma omp parallel for schedule(static)
            for (int64_t r = 0; r < R; ++r) {
                for (int i = 0; i < c; ++i) dx[r * c + i] += g[r * Ctot + off + i];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Layout permutes between NCHW maps and {N*H*W, C} token rows.
// ---------------------------------------------------------------------------

template <class T>
Var<T> nchw_to_rows(const Var<T>& x) {
    if (x.val().ndim() != 4) throw ShapeError("nchw_to_rows expects {N,C,H,W}");
    int N = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), W = x.val().dim(3);
    Tensor<T> out({N * H * W, C});
    const T* xv = x.val().data();
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
                T* row = out.data() + (((int64_t)n * H + h) * W + w) * C;
                for (int c = 0; c < C; ++c) row[c] = xv[(((int64_t)n * C + c) * H + h) * W + w];
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x}, [xn, N, C, H, W](Node<T>* self) {
        xn->ensure_grad();
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                for (int h = 0; h < H; ++h) {
                    for (int w = 0; w < W; ++w) {
                        dx[(((int64_t)n * C + c) * H + h) * W + w] +=
                            g[(((int64_t)n * H + h) * W + w) * C + c];
                    }
                }
            }
        }
    });
}

template <class T>
Var<T> rows_to_nchw(const Var<T>& x, int N, int H, int W) {
    auto [R, C] = detail::rows_cols(x.val());
    if (R != (int64_t)N * H * W) throw ShapeError("rows_to_nchw: row count mismatch");
    Tensor<T> out({N, C, H, W});
    const T* xv = x.val().data();
    int Cl = C;
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < Cl; ++c) {
            for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                    out.v[(((int64_t)n * Cl + c) * H + h) * W + w] =
                        xv[(((int64_t)n * H + h) * W + w) * Cl + c];
                }
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x}, [xn, N, H, W, Cl](Node<T>* self) {
        xn->ensure_grad();
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                    T* row = dx + (((int64_t)n * H + h) * W + w) * Cl;
                    for (int c = 0; c < Cl; ++c) {
                        row[c] += g[(((int64_t)n * Cl + c) * H + h) * W + w];
                    }
                }
            }
        }
    });
}

// Cyclic shift of token rows: y(n,h,w) = x(n, (h+sh) mod H, (w+sw) mod W).
template <class T>
Var<T> roll_rows(const Var<T>& x, int N, int H, int W, int sh, int sw) {
    auto [R, C] = detail::rows_cols(x.val());
    if (R != (int64_t)N * H * W) throw ShapeError("roll_rows: row count mismatch");
    auto mod = [](int a, int n) { return ((a % n) + n) % n; };
    Tensor<T> out;
    out.shape = x.val().shape;
    out.v.resize(x.val().v.size());
    const T* xv = x.val().data();
    int Cl = C;
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int h = 0; h < H; ++h) {
            int hs = mod(h + sh, H);
            for (int w = 0; w < W; ++w) {
                int ws = mod(w + sw, W);
                const T* src = xv + (((int64_t)n * H + hs) * W + ws) * Cl;
                std::copy(src, src + Cl, out.data() + (((int64_t)n * H + h) * W + w) * Cl);
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x}, [xn, N, H, W, sh, sw, Cl, mod](Node<T>* self) {
        xn->ensure_grad();
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int h = 0; h < H; ++h) {
                int hs = mod(h - sh, H);
                for (int w = 0; w < W; ++w) {
                    int ws = mod(w - sw, W);
                    const T* src = g + (((int64_t)n * H + hs) * W + ws) * Cl;
                    T* dst = dx + (((int64_t)n * H + h) * W + w) * Cl;
                    for (int c = 0; c < Cl; ++c) dst[c] += src[c];
                }
            }
        }
    });
}

// Window partition: {N*H*W, C} rows -> {N*nW*win*win, C} rows grouped so each
// win×win window is contiguous. Pure permutation; reverse undoes it exactly.
template <class T>
Var<T> window_partition(const Var<T>& x, int N, int H, int W, int win) {
    auto [R, C] = detail::rows_cols(x.val());
    if (R != (int64_t)N * H * W || H % win != 0 || W % win != 0) {
        throw ShapeError("window_partition: geometry mismatch");
    }
    int nWy = H / win, nWx = W / win;
    Tensor<T> out;
    out.shape = x.val().shape;
    out.v.resize(x.val().v.size());
    const T* xv = x.val().data();
    int Cl = C;
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
                int64_t orow =
                    ((((int64_t)n * nWy + h / win) * nWx + w / win) * win + h % win) * win +
                    w % win;
                const T* src = xv + (((int64_t)n * H + h) * W + w) * Cl;
                std::copy(src, src + Cl, out.data() + orow * Cl);
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x}, [xn, N, H, W, win, Cl](Node<T>* self) {
        xn->ensure_grad();
        int nWy = H / win, nWx = W / win;
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                    int64_t orow =
                        ((((int64_t)n * nWy + h / win) * nWx + w / win) * win + h % win) * win +
                        w % win;
                    const T* src = g + orow * Cl;
                    T* dst = dx + (((int64_t)n * H + h) * W + w) * Cl;
                    for (int c = 0; c < Cl; ++c) dst[c] += src[c];
                }
            }
        }
    });
}

template <class T>
Var<T> window_reverse(const Var<T>& x, int N, int H, int W, int win) {
    auto [R, C] = detail::rows_cols(x.val());
    if (R != (int64_t)N * H * W || H % win != 0 || W % win != 0) {
        throw ShapeError("window_reverse: geometry mismatch");
    }
    int nWy = H / win, nWx = W / win;
    Tensor<T> out;
    out.shape = x.val().shape;
    out.v.resize(x.val().v.size());
    const T* xv = x.val().data();
    int Cl = C;
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
                int64_t irow =
                    ((((int64_t)n * nWy + h / win) * nWx + w / win) * win + h % win) * win +
                    w % win;
                const T* src = xv + irow * Cl;
                std::copy(src, src + Cl, out.data() + (((int64_t)n * H + h) * W + w) * Cl);
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x}, [xn, N, H, W, win, Cl](Node<T>* self) {
        xn->ensure_grad();
        int nWy = H / win, nWx = W / win;
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int h = 0; h < H; ++h) {
                for (int w = 0; w < W; ++w) {
                    int64_t irow =
                        ((((int64_t)n * nWy + h / win) * nWx + w / win) * win + h % win) * win +
                        w % win;
                    const T* src = g + (((int64_t)n * H + h) * W + w) * Cl;
                    T* dst = dx + irow * Cl;
                    for (int c = 0; c < Cl; ++c) dst[c] += src[c];
                }
            }
        }
    });
}

// 2x2 token merge: rows {N*H*W, C} -> {N*(H/2)*(W/2), 4C}, channel groups
// ordered (top-left, bottom-left, top-right, bottom-right).
template <class T>
Var<T> space_to_depth2(const Var<T>& x, int N, int H, int W) {
    auto [R, C] = detail::rows_cols(x.val());
    if (R != (int64_t)N * H * W || H % 2 != 0 || W % 2 != 0) {
        throw ShapeError("space_to_depth2: geometry");
    }
    int Ho = H / 2, Wo = W / 2, Cl = C;
    Tensor<T> out({N * Ho * Wo, 4 * Cl});
    const T* xv = x.val().data();
    // group g holds source offset (dy, dx): 0->(0,0) 1->(1,0) 2->(0,1) 3->(1,1)
    static constexpr int kDy[4] = {0, 1, 0, 1};
    static constexpr int kDx[4] = {0, 0, 1, 1};
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int h = 0; h < Ho; ++h) {
            for (int w = 0; w < Wo; ++w) {
                T* orow = out.data() + (((int64_t)n * Ho + h) * Wo + w) * 4 * Cl;
                for (int g = 0; g < 4; ++g) {
                    const T* src =
                        xv + (((int64_t)n * H + 2 * h + kDy[g]) * W + 2 * w + kDx[g]) * Cl;
                    std::copy(src, src + Cl, orow + g * Cl);
                }
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x}, [xn, N, H, W, Ho, Wo, Cl](Node<T>* self) {
        xn->ensure_grad();
        static constexpr int kDy[4] = {0, 1, 0, 1};
        static constexpr int kDx[4] = {0, 0, 1, 1};
        const T* g_ = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int h = 0; h < Ho; ++h) {
                for (int w = 0; w < Wo; ++w) {
                    const T* orow = g_ + (((int64_t)n * Ho + h) * Wo + w) * 4 * Cl;
                    for (int g = 0; g < 4; ++g) {
                        T* dst =
                            dx + (((int64_t)n * H + 2 * h + kDy[g]) * W + 2 * w + kDx[g]) * Cl;
                        for (int c = 0; c < Cl; ++c) dst[c] += orow[g * Cl + c];
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// LayerNorm over the trailing feature axis.
template <class T>
Var<T> layernorm_lastdim(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    auto [R, C] = detail::rows_cols(x.val());
    check_shape(gamma.val(), {C}, "layernorm gamma");
    check_shape(beta.val(), {C}, "layernorm beta");
    Tensor<T> out;
    out.shape = x.val().shape;
    out.v.resize(x.val().v.size());
    auto xhat = std::make_shared<Tensor<T>>(x.val().shape);
    auto invstd = std::make_shared<std::vector<T>>(R);
    const T* xv = x.val().data();
    const T* gv = gamma.val().data();
    const T* bv = beta.val().data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < R; ++r) {
        const T* row = xv + r * C;
        T mu = 0;
        for (int c = 0; c < C; ++c) mu += row[c];
        mu /= C;
        T var = 0;
        for (int c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= C;
        T inv = T(1) / std::sqrt(var + eps);
        (*invstd)[r] = inv;
        for (int c = 0; c < C; ++c) {
            T xh = (row[c] - mu) * inv;
            xhat->v[r * C + c] = xh;
            out.v[r * C + c] = gv[c] * xh + bv[c];
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    int64_t Rl = R;
    int Cl = C;
    return detail::make_op<T>(std::move(out), {x, gamma, beta},
                              [xn, gn, bn, xhat, invstd, Rl, Cl](Node<T>* self) {
        const T* g = self->grad.data();
        const T* gv = gn->val.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t r = 0; r < Rl; ++r) {
                const T* grow = g + r * Cl;
                const T* xh = xhat->data() + r * Cl;
                T sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (int c = 0; c < Cl; ++c) {
                    T dxh = grow[c] * gv[c];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xh[c];
                }
                T inv = (*invstd)[r];
                for (int c = 0; c < Cl; ++c) {
                    T dxh = grow[c] * gv[c];
                    dx[r * Cl + c] +=
                        inv * (dxh - sum_dxhat / Cl - xh[c] * sum_dxhat_xhat / Cl);
                }
            }
        }
        if (gn->requires_grad) {
            gn->ensure_grad();
            T* dg = gn->grad.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < Cl; ++c) {
                T acc = 0;
                for (int64_t r = 0; r < Rl; ++r) acc += g[r * Cl + c] * xhat->v[r * Cl + c];
                dg[c] += acc;
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            T* db = bn->grad.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < Cl; ++c) {
                T acc = 0;
                for (int64_t r = 0; r < Rl; ++r) acc += g[r * Cl + c];
                db[c] += acc;
            }
        }
    });
}

// LayerNorm across channels of an NCHW map (normalizes the C fiber at each
// spatial position), as used around strided convolutions.
template <class T>
Var<T> layernorm_nchw(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    if (x.val().ndim() != 4) throw ShapeError("layernorm_nchw expects {N,C,H,W}");
    int N = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), W = x.val().dim(3);
    check_shape(gamma.val(), {C}, "layernorm gamma");
    check_shape(beta.val(), {C}, "layernorm beta");
    int64_t HW = (int64_t)H * W;
    Tensor<T> out;
    out.shape = x.val().shape;
    out.v.resize(x.val().v.size());
    auto xhat = std::make_shared<Tensor<T>>(x.val().shape);
    auto invstd = std::make_shared<std::vector<T>>((size_t)N * HW);
    const T* xv = x.val().data();
    const T* gv = gamma.val().data();
    const T* bv = beta.val().data();
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int64_t p = 0; p < HW; ++p) {
            const T* base = xv + (int64_t)n * C * HW + p;
            T mu = 0;
            for (int c = 0; c < C; ++c) mu += base[c * HW];
            mu /= C;
            T var = 0;
            for (int c = 0; c < C; ++c) {
                T d = base[c * HW] - mu;
                var += d * d;
            }
            var /= C;
            T inv = T(1) / std::sqrt(var + eps);
            (*invstd)[(size_t)n * HW + p] = inv;
            for (int c = 0; c < C; ++c) {
                T xh = (base[c * HW] - mu) * inv;
                xhat->v[(int64_t)n * C * HW + (int64_t)c * HW + p] = xh;
                out.v[(int64_t)n * C * HW + (int64_t)c * HW + p] = gv[c] * xh + bv[c];
            }
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return detail::make_op<T>(std::move(out), {x, gamma, beta},
                              [xn, gn, bn, xhat, invstd, N, C, HW](Node<T>* self) {
        const T* g = self->grad.data();
        const T* gv = gn->val.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
            for (int n = 0; n < N; ++n) {
                for (int64_t p = 0; p < HW; ++p) {
                    int64_t base = (int64_t)n * C * HW + p;
                    T sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (int c = 0; c < C; ++c) {
                        T dxh = g[base + (int64_t)c * HW] * gv[c];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat->v[base + (int64_t)c * HW];
                    }
                    T inv = (*invstd)[(size_t)n * HW + p];
                    for (int c = 0; c < C; ++c) {
                        T dxh = g[base + (int64_t)c * HW] * gv[c];
                        dx[base + (int64_t)c * HW] +=
                            inv * (dxh - sum_dxhat / C -
                                   xhat->v[base + (int64_t)c * HW] * sum_dxhat_xhat / C);
                    }
                }
            }
        }
        if (gn->requires_grad || bn->requires_grad) {
            gn->ensure_grad();
            bn->ensure_grad();
            T* dg = gn->grad.data();
            T* db = bn->grad.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < C; ++c) {
                T ag = 0, ab = 0;
                for (int n = 0; n < N; ++n) {
                    int64_t base = (int64_t)n * C * HW + (int64_t)c * HW;
                    for (int64_t p = 0; p < HW; ++p) {
                        ag += g[base + p] * xhat->v[base + p];
                        ab += g[base + p];
                    }
                }
                dg[c] += ag;
                db[c] += ab;
            }
        }
    });
}

// BatchNorm state shared between train steps; running stats are plain
// buffers (checkpointed, never differentiated).
template <class T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);
};

// BatchNorm over {N,C,H,W} (per channel) or {N,C} (HW=1). Training mode uses
// batch statistics and updates the running buffers in place.
template <class T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 BatchNormState<T>& state, bool training) {
    int nd = x.val().ndim();
    if (nd != 2 && nd != 4) throw ShapeError("batchnorm expects {N,C} or {N,C,H,W}");
    int N = x.val().dim(0), C = x.val().dim(1);
    int64_t HW = nd == 4 ? (int64_t)x.val().dim(2) * x.val().dim(3) : 1;
    check_shape(gamma.val(), {C}, "batchnorm gamma");
    int64_t m = (int64_t)N * HW;
    if (m < 1) throw ShapeError("batchnorm on an empty batch");

    Tensor<T> out;
    out.shape = x.val().shape;
    out.v.resize(x.val().v.size());
    auto xhat = std::make_shared<Tensor<T>>(x.val().shape);
    auto invstd = std::make_shared<std::vector<T>>(C);
    const T* xv = x.val().data();
    const T* gv = gamma.val().data();
    const T* bv = beta.val().data();

    auto elem = [N, C, HW](int n, int c, int64_t p) {
        return ((int64_t)n * C + c) * HW + p;
    };

    if (training) {
        std::vector<T> mean(C), var(C);
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            T mu = 0;
            for (int n = 0; n < N; ++n) {
                for (int64_t p = 0; p < HW; ++p) mu += xv[elem(n, c, p)];
            }
            mu /= m;
            T v2 = 0;
            for (int n = 0; n < N; ++n) {
                for (int64_t p = 0; p < HW; ++p) {
                    T d = xv[elem(n, c, p)] - mu;
                    v2 += d * d;
                }
            }
            v2 /= m;
            mean[c] = mu;
            var[c] = v2;
            T inv = T(1) / std::sqrt(v2 + state.eps);
            (*invstd)[c] = inv;
            for (int n = 0; n < N; ++n) {
                for (int64_t p = 0; p < HW; ++p) {
                    T xh = (xv[elem(n, c, p)] - mu) * inv;
                    xhat->v[elem(n, c, p)] = xh;
                    out.v[elem(n, c, p)] = gv[c] * xh + bv[c];
                }
            }
        }
        // Unbiased variance feeds the running buffer.
        T unbias = m > 1 ? T(m) / T(m - 1) : T(1);
        for (int c = 0; c < C; ++c) {
            state.running_mean.v[c] =
                (T(1) - state.momentum) * state.running_mean.v[c] + state.momentum * mean[c];
            state.running_var.v[c] = (T(1) - state.momentum) * state.running_var.v[c] +
                                     state.momentum * var[c] * unbias;
        }
        auto xn = x.node(), gn = gamma.node(), bn = beta.node();
        return detail::make_op<T>(std::move(out), {x, gamma, beta},
                                  [xn, gn, bn, xhat, invstd, N, C, HW, m, elem](Node<T>* self) {
            const T* g = self->grad.data();
            const T* gv = gn->val.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
                for (int c = 0; c < C; ++c) {
                    T sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (int n = 0; n < N; ++n) {
                        for (int64_t p = 0; p < HW; ++p) {
                            T dxh = g[elem(n, c, p)] * gv[c];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xhat->v[elem(n, c, p)];
                        }
                    }
                    T inv = (*invstd)[c];
                    for (int n = 0; n < N; ++n) {
                        for (int64_t p = 0; p < HW; ++p) {
                            T dxh = g[elem(n, c, p)] * gv[c];
                            dx[elem(n, c, p)] +=
                                inv * (dxh - sum_dxhat / m -
                                       xhat->v[elem(n, c, p)] * sum_dxhat_xhat / m);
                        }
                    }
                }
            }
            if (gn->requires_grad || bn->requires_grad) {
                gn->ensure_grad();
                bn->ensure_grad();
                T* dg = gn->grad.data();
                T* db = bn->grad.data();
#pragma omp parallel for schedule(static)
                for (int c = 0; c < C; ++c) {
                    T ag = 0, ab = 0;
                    for (int n = 0; n < N; ++n) {
                        for (int64_t p = 0; p < HW; ++p) {
                            ag += g[elem(n, c, p)] * xhat->v[elem(n, c, p)];
                            ab += g[elem(n, c, p)];
                        }
                    }
                    dg[c] += ag;
                    db[c] += ab;
                }
            }
        });
    }

    // Eval mode: fixed running statistics.
    std::vector<T> inv(C);
    for (int c = 0; c < C; ++c) inv[c] = T(1) / std::sqrt(state.running_var.v[c] + state.eps);
    const T* rm = state.running_mean.data();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        for (int n = 0; n < N; ++n) {
            for (int64_t p = 0; p < HW; ++p) {
                out.v[elem(n, c, p)] = gv[c] * (xv[elem(n, c, p)] - rm[c]) * inv[c] + bv[c];
            }
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto inv_sh = std::make_shared<std::vector<T>>(std::move(inv));
    auto rm_sh = std::make_shared<std::vector<T>>(state.running_mean.v);
    return detail::make_op<T>(std::move(out), {x, gamma, beta},
                              [xn, gn, bn, inv_sh, rm_sh, N, C, HW, elem](Node<T>* self) {
        const T* g = self->grad.data();
        const T* gv = gn->val.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < C; ++c) {
                for (int n = 0; n < N; ++n) {
                    for (int64_t p = 0; p < HW; ++p) {
                        dx[elem(n, c, p)] += g[elem(n, c, p)] * gv[c] * (*inv_sh)[c];
                    }
                }
            }
        }
        if (gn->requires_grad || bn->requires_grad) {
            gn->ensure_grad();
            bn->ensure_grad();
            T* dg = gn->grad.data();
            T* db = bn->grad.data();
            const T* xv = xn->val.data();
#pragma omp parallel for schedule(static)
            for (int c = 0; c < C; ++c) {
                T ag = 0, ab = 0;
                for (int n = 0; n < N; ++n) {
                    for (int64_t p = 0; p < HW; ++p) {
                        ag += g[elem(n, c, p)] * (xv[elem(n, c, p)] - (*rm_sh)[c]) * (*inv_sh)[c];
                        ab += g[elem(n, c, p)];
                    }
                }
                dg[c] += ag;
                db[c] += ab;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution / pooling ops (batched NCHW)
// ---------------------------------------------------------------------------

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& W, const Var<T>& b, int stride, int pad) {
    if (x.val().ndim() != 4 || W.val().ndim() != 4) throw ShapeError("conv2d expects 4-D x and W");
    int N = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), Wd = x.val().dim(3);
    int OC = W.val().dim(0), kh = W.val().dim(2), kw = W.val().dim(3);
    if (W.val().dim(1) != C) throw ShapeError("conv2d: channel mismatch");
    int OH = kernels::conv_out_dim(H, kh, stride, pad);
    int OW = kernels::conv_out_dim(Wd, kw, stride, pad);
    int CKK = C * kh * kw;
    int64_t L = (int64_t)OH * OW;

    Tensor<T> out({N, OC, OH, OW});
    std::vector<T> col((size_t)CKK * L);
    for (int n = 0; n < N; ++n) {
        kernels::im2col(x.val().data() + (int64_t)n * C * H * Wd, C, H, Wd, kh, kw, stride, pad,
                        col.data());
        kernels::gemm<T>(false, false, OC, (int)L, CKK, T(1), W.val().data(), CKK, col.data(),
                         (int)L, T(0), out.data() + (int64_t)n * OC * L, (int)L);
    }
    if (b.defined()) {
        check_shape(b.val(), {OC}, "conv2d bias");
        const T* bv = b.val().data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < out.numel(); ++i) out.v[i] += bv[(i / L) % OC];
    }
    auto xn = x.node(), wn = W.node();
    auto bn = b.defined() ? b.node() : nullptr;
    return detail::make_op<T>(
        std::move(out), {x, W, b},
        [xn, wn, bn, N, C, H, Wd, OC, kh, kw, stride, pad, CKK, L, OH, OW](Node<T>* self) {
            const T* g = self->grad.data();
            std::vector<T> col((size_t)CKK * L);
            if (wn->requires_grad) wn->ensure_grad();
            if (xn->requires_grad) xn->ensure_grad();
            if (bn && bn->requires_grad) bn->ensure_grad();
            std::vector<T> dcol((size_t)CKK * L);
            for (int n = 0; n < N; ++n) {
                const T* gn_ = g + (int64_t)n * OC * L;
                if (wn->requires_grad) {
                    kernels::im2col(xn->val.data() + (int64_t)n * C * H * Wd, C, H, Wd, kh, kw,
                                    stride, pad, col.data());
                    // dW += g_n @ col^T
                    kernels::gemm<T>(false, true, OC, CKK, (int)L, T(1), gn_, (int)L, col.data(),
                                     (int)L, T(1), wn->grad.data(), CKK);
                }
                if (xn->requires_grad) {
                    // dcol = W^T @ g_n, then gathered back to image layout
                    kernels::gemm<T>(true, false, CKK, (int)L, OC, T(1), wn->val.data(), CKK, gn_,
                                     (int)L, T(0), dcol.data(), (int)L);
                    std::vector<T> dxn((size_t)C * H * Wd);
                    kernels::col2im(dcol.data(), C, H, Wd, kh, kw, stride, pad, dxn.data());
                    T* dst = xn->grad.data() + (int64_t)n * C * H * Wd;
                    for (size_t i = 0; i < dxn.size(); ++i) dst[i] += dxn[i];
                }
                if (bn && bn->requires_grad) {
                    T* db = bn->grad.data();
                    for (int oc = 0; oc < OC; ++oc) {
                        T acc = 0;
                        for (int64_t l = 0; l < L; ++l) acc += gn_[(int64_t)oc * L + l];
                        db[oc] += acc;
                    }
                }
            }
        });
}

template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& W, const Var<T>& b, int pad) {
    if (x.val().ndim() != 4 || W.val().ndim() != 3) {
        throw ShapeError("depthwise_conv2d expects x {N,C,H,W}, W {C,k,k}");
    }
    int N = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), Wd = x.val().dim(3);
    int k = W.val().dim(1);
    if (W.val().dim(0) != C || W.val().dim(2) != k) throw ShapeError("depthwise weight shape");
    int OH = kernels::conv_out_dim(H, k, 1, pad);
    int OW = kernels::conv_out_dim(Wd, k, 1, pad);
    Tensor<T> out({N, C, OH, OW});
    const T* bv = b.defined() ? b.val().data() : nullptr;
    for (int n = 0; n < N; ++n) {
        kernels::depthwise_fwd(x.val().data() + (int64_t)n * C * H * Wd, W.val().data(), bv, C, H,
                               Wd, k, pad, out.data() + (int64_t)n * C * OH * OW);
    }
    auto xn = x.node(), wn = W.node();
    auto bn = b.defined() ? b.node() : nullptr;
    return detail::make_op<T>(std::move(out), {x, W, b},
                              [xn, wn, bn, N, C, H, Wd, k, pad, OH, OW](Node<T>* self) {
        const T* g = self->grad.data();
        if (xn->requires_grad) {
            xn->ensure_grad();
            std::vector<T> dxn((size_t)C * H * Wd);
            for (int n = 0; n < N; ++n) {
                kernels::depthwise_bwd_input(g + (int64_t)n * C * OH * OW, wn->val.data(), C, H,
                                             Wd, k, pad, dxn.data());
                T* dst = xn->grad.data() + (int64_t)n * C * H * Wd;
                for (size_t i = 0; i < dxn.size(); ++i) dst[i] += dxn[i];
            }
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            T* db = nullptr;
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                db = bn->grad.data();
            }
            for (int n = 0; n < N; ++n) {
                kernels::depthwise_bwd_weight(xn->val.data() + (int64_t)n * C * H * Wd,
                                              g + (int64_t)n * C * OH * OW, C, H, Wd, k, pad,
                                              wn->grad.data(), db);
            }
        }
    });
}

template <class T>
Var<T> maxpool2d(const Var<T>& x, int k, int stride) {
    if (x.val().ndim() != 4) throw ShapeError("maxpool2d expects {N,C,H,W}");
    int N = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), Wd = x.val().dim(3);
    if (k <= 0 || stride <= 0 || H < k || Wd < k) throw ShapeError("maxpool2d geometry");
    int OH = (H - k) / stride + 1;
    int OW = (Wd - k) / stride + 1;
    Tensor<T> out({N, C, OH, OW});
    auto argmax = std::make_shared<std::vector<int>>((size_t)N * C * OH * OW);
    for (int n = 0; n < N; ++n) {
        kernels::maxpool_fwd(x.val().data() + (int64_t)n * C * H * Wd, C, H, Wd, k, stride,
                             out.data() + (int64_t)n * C * OH * OW,
                             argmax->data() + (int64_t)n * C * OH * OW);
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x},
                              [xn, argmax, N, C, H, Wd, OH, OW](Node<T>* self) {
        xn->ensure_grad();
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const T* gc = g + ((int64_t)n * C + c) * OH * OW;
                const int* am = argmax->data() + ((int64_t)n * C + c) * OH * OW;
                T* dxc = dx + ((int64_t)n * C + c) * H * Wd;
                for (int i = 0; i < OH * OW; ++i) dxc[am[i]] += gc[i];
            }
        }
    });
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    if (x.val().ndim() != 4) throw ShapeError("global_avg_pool expects {N,C,H,W}");
    int N = x.val().dim(0), C = x.val().dim(1);
    int64_t HW = (int64_t)x.val().dim(2) * x.val().dim(3);
    Tensor<T> out({N, C});
    const T* xv = x.val().data();
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            T acc = 0;
            const T* base = xv + ((int64_t)n * C + c) * HW;
            for (int64_t p = 0; p < HW; ++p) acc += base[p];
            out.v[(int64_t)n * C + c] = acc / HW;
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out), {x}, [xn, N, C, HW](Node<T>* self) {
        xn->ensure_grad();
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                T gv = g[(int64_t)n * C + c] / HW;
                T* base = dx + ((int64_t)n * C + c) * HW;
                for (int64_t p = 0; p < HW; ++p) base[p] += gv;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Attention building blocks. Token rows are {G*L, C} with G windows of L
// tokens; heads split C into head_dim columns.
// ---------------------------------------------------------------------------

// logits[(g*heads+h)*L + i, j] = scale * sum_d q[g*L+i, h*hd+d] * k[g*L+j, h*hd+d]
template <class T>
Var<T> attn_scores(const Var<T>& q, const Var<T>& k, int G, int L, int heads, T scale_) {
    auto [R, C] = detail::rows_cols(q.val());
    if (R != (int64_t)G * L || C % heads != 0 || !q.val().same_shape(k.val())) {
        throw ShapeError("attn_scores: bad geometry");
    }
    int hd = C / heads;
    Tensor<T> out({G * heads * L, L});
    const T* qv = q.val().data();
    const T* kv = k.val().data();
#pragma omp parallel for schedule(static)
    for (int g = 0; g < G; ++g) {
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < L; ++i) {
                const T* qi = qv + ((int64_t)g * L + i) * C + h * hd;
                T* orow = out.data() + (((int64_t)g * heads + h) * L + i) * L;
                for (int j = 0; j < L; ++j) {
                    const T* kj = kv + ((int64_t)g * L + j) * C + h * hd;
                    T acc = 0;
                    for (int d = 0; d < hd; ++d) acc += qi[d] * kj[d];
                    orow[j] = scale_ * acc;
                }
            }
        }
    }
    auto qn = q.node(), kn = k.node();
    return detail::make_op<T>(std::move(out), {q, k},
                              [qn, kn, G, L, heads, hd, scale_](Node<T>* self) {
        int C = heads * hd;
        const T* g_ = self->grad.data();
        if (qn->requires_grad) qn->ensure_grad();
        if (kn->requires_grad) kn->ensure_grad();
        T* dq = qn->requires_grad ? qn->grad.data() : nullptr;
        T* dk = kn->requires_grad ? kn->grad.data() : nullptr;
        const T* qv = qn->val.data();
        const T* kv = kn->val.data();
#pragma omp parallel for schedule(static)
        for (int g = 0; g < G; ++g) {
            for (int h = 0; h < heads; ++h) {
                const T* gl = g_ + ((int64_t)g * heads + h) * L * L;
                if (dq) {
                    for (int i = 0; i < L; ++i) {
                        T* dqi = dq + ((int64_t)g * L + i) * C + h * hd;
                        for (int j = 0; j < L; ++j) {
                            T w = scale_ * gl[(int64_t)i * L + j];
                            const T* kj = kv + ((int64_t)g * L + j) * C + h * hd;
                            for (int d = 0; d < hd; ++d) dqi[d] += w * kj[d];
                        }
                    }
                }
                if (dk) {
                    for (int j = 0; j < L; ++j) {
                        T* dkj = dk + ((int64_t)g * L + j) * C + h * hd;
                        for (int i = 0; i < L; ++i) {
                            T w = scale_ * gl[(int64_t)i * L + j];
                            const T* qi = qv + ((int64_t)g * L + i) * C + h * hd;
                            for (int d = 0; d < hd; ++d) dkj[d] += w * qi[d];
                        }
                    }
                }
            }
        }
    });
}

// Adds a learned relative-position bias: logits[(g*heads+h)*L+i, j] +=
// table[index[i*L+j], h]. index is a fixed lookup shared by all windows.
template <class T>
Var<T> add_position_bias(const Var<T>& logits, const Var<T>& table,
                         std::shared_ptr<const std::vector<int>> index, int G, int L, int heads) {
    if (logits.val().dim(0) != G * heads * L || logits.val().dim(1) != L) {
        throw ShapeError("add_position_bias: logits geometry");
    }
    if ((int64_t)index->size() != (int64_t)L * L) throw ShapeError("add_position_bias: index size");
    Tensor<T> out = logits.val();
    const T* tv = table.val().data();
#pragma omp parallel for schedule(static)
    for (int g = 0; g < G; ++g) {
        for (int h = 0; h < heads; ++h) {
            T* base = out.data() + ((int64_t)g * heads + h) * L * L;
            for (int64_t ij = 0; ij < (int64_t)L * L; ++ij) {
                base[ij] += tv[(int64_t)(*index)[ij] * heads + h];
            }
        }
    }
    auto ln = logits.node(), tn = table.node();
    return detail::make_op<T>(std::move(out), {logits, table},
                              [ln, tn, index, G, L, heads](Node<T>* self) {
        const T* g_ = self->grad.data();
        if (ln->requires_grad) {
            ln->ensure_grad();
            T* dl = ln->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < self->grad.numel(); ++i) dl[i] += g_[i];
        }
        if (tn->requires_grad) {
            tn->ensure_grad();
            T* dt = tn->grad.data();
#pragma omp parallel for schedule(static)
            for (int h = 0; h < heads; ++h) {
                // Each h column owned by one thread; repeated indices are fine.
                for (int g = 0; g < G; ++g) {
                    const T* base = g_ + ((int64_t)g * heads + h) * L * L;
                    for (int64_t ij = 0; ij < (int64_t)L * L; ++ij) {
                        dt[(int64_t)(*index)[ij] * heads + h] += base[ij];
                    }
                }
            }
        }
    });
}

// Adds the (constant) shifted-window mask: windows cycle through nW mask
// slices. Gradient passes straight through.
template <class T>
Var<T> add_window_mask(const Var<T>& logits, std::shared_ptr<const Tensor<T>> mask, int G, int L,
                       int heads) {
    int nW = mask->dim(0);
    if (mask->dim(1) != L || mask->dim(2) != L || G % nW != 0) {
        throw ShapeError("add_window_mask: geometry");
    }
    Tensor<T> out = logits.val();
#pragma omp parallel for schedule(static)
    for (int g = 0; g < G; ++g) {
        const T* mw = mask->data() + (int64_t)(g % nW) * L * L;
        for (int h = 0; h < heads; ++h) {
            T* base = out.data() + ((int64_t)g * heads + h) * L * L;
            for (int64_t ij = 0; ij < (int64_t)L * L; ++ij) base[ij] += mw[ij];
        }
    }
    auto ln = logits.node();
    return detail::make_op<T>(std::move(out), {logits}, [ln](Node<T>* self) {
        ln->ensure_grad();
        const T* g_ = self->grad.data();
        T* dl = ln->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < self->grad.numel(); ++i) dl[i] += g_[i];
    });
}

template <class T>
Var<T> softmax_rows(const Var<T>& x) {
    auto [R, C] = detail::rows_cols(x.val());
    Tensor<T> out;
    out.shape = x.val().shape;
    out.v.resize(x.val().v.size());
    const T* xv = x.val().data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < R; ++r) {
        const T* row = xv + r * C;
        T mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        T sum = 0;
        for (int c = 0; c < C; ++c) {
            T e = std::exp(row[c] - mx);
            out.v[r * C + c] = e;
            sum += e;
        }
        for (int c = 0; c < C; ++c) out.v[r * C + c] /= sum;
    }
    auto xn = x.node();
    auto p = std::make_shared<Tensor<T>>(out);
    int64_t Rl = R;
    int Cl = C;
    return detail::make_op<T>(std::move(out), {x}, [xn, p, Rl, Cl](Node<T>* self) {
        xn->ensure_grad();
        const T* g = self->grad.data();
        T* dx = xn->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < Rl; ++r) {
            const T* pr = p->data() + r * Cl;
            const T* gr = g + r * Cl;
            T dot = 0;
            for (int c = 0; c < Cl; ++c) dot += pr[c] * gr[c];
            for (int c = 0; c < Cl; ++c) dx[r * Cl + c] += pr[c] * (gr[c] - dot);
        }
    });
}

// out[g*L+i, h*hd+d] = sum_j p[(g*heads+h)*L+i, j] * v[g*L+j, h*hd+d]
template <class T>
Var<T> attn_apply(const Var<T>& p, const Var<T>& v, int G, int L, int heads) {
    auto [Rv, C] = detail::rows_cols(v.val());
    if (Rv != (int64_t)G * L || C % heads != 0 || p.val().dim(0) != G * heads * L ||
        p.val().dim(1) != L) {
        throw ShapeError("attn_apply: geometry");
    }
    int hd = C / heads;
    Tensor<T> out({G * L, C});
    const T* pv = p.val().data();
    const T* vv = v.val().data();
#pragma omp parallel for schedule(static)
    for (int g = 0; g < G; ++g) {
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < L; ++i) {
                const T* pr = pv + (((int64_t)g * heads + h) * L + i) * L;
                T* orow = out.data() + ((int64_t)g * L + i) * C + h * hd;
                for (int d = 0; d < hd; ++d) orow[d] = 0;
                for (int j = 0; j < L; ++j) {
                    const T* vj = vv + ((int64_t)g * L + j) * C + h * hd;
                    T w = pr[j];
                    for (int d = 0; d < hd; ++d) orow[d] += w * vj[d];
                }
            }
        }
    }
    auto pn = p.node(), vn = v.node();
    return detail::make_op<T>(std::move(out), {p, v}, [pn, vn, G, L, heads, hd](Node<T>* self) {
        int C = heads * hd;
        const T* g_ = self->grad.data();
        if (pn->requires_grad) pn->ensure_grad();
        if (vn->requires_grad) vn->ensure_grad();
        T* dp = pn->requires_grad ? pn->grad.data() : nullptr;
        T* dv = vn->requires_grad ? vn->grad.data() : nullptr;
        const T* pv = pn->val.data();
        const T* vv = vn->val.data();
#pragma omp parallel for schedule(static)
        for (int g = 0; g < G; ++g) {
            for (int h = 0; h < heads; ++h) {
                if (dp) {
                    for (int i = 0; i < L; ++i) {
                        const T* go = g_ + ((int64_t)g * L + i) * C + h * hd;
                        T* dpi = dp + (((int64_t)g * heads + h) * L + i) * L;
                        for (int j = 0; j < L; ++j) {
                            const T* vj = vv + ((int64_t)g * L + j) * C + h * hd;
                            T acc = 0;
                            for (int d = 0; d < hd; ++d) acc += go[d] * vj[d];
                            dpi[j] += acc;
                        }
                    }
                }
                if (dv) {
                    for (int j = 0; j < L; ++j) {
                        T* dvj = dv + ((int64_t)g * L + j) * C + h * hd;
                        for (int i = 0; i < L; ++i) {
                            T w = pv[(((int64_t)g * heads + h) * L + i) * L + j];
                            const T* go = g_ + ((int64_t)g * L + i) * C + h * hd;
                            for (int d = 0; d < hd; ++d) dvj[d] += w * go[d];
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <class T>
Var<T> mse_loss(const Var<T>& pred, const Tensor<T>& target) {
    if (pred.val().numel() == 0) throw ValidationError("mse_loss on an empty batch");
    if (pred.val().numel() != target.numel()) throw ShapeError("mse_loss: length mismatch");
    int64_t N = pred.val().numel();
    T acc = 0;
    for (int64_t i = 0; i < N; ++i) {
        T d = pred.val().v[i] - target.v[i];
        acc += d * d;
    }
    Tensor<T> out({1});
    out.v[0] = acc / N;
    auto pn = pred.node();
    auto tgt = std::make_shared<Tensor<T>>(target);
    return detail::make_op<T>(std::move(out), {pred}, [pn, tgt, N](Node<T>* self) {
        pn->ensure_grad();
        T g = self->grad.v[0];
        T* dp = pn->grad.data();
        for (int64_t i = 0; i < N; ++i) {
            dp[i] += g * T(2) * (pn->val.v[i] - tgt->v[i]) / N;
        }
    });
}

template <class T>
Var<T> cross_entropy_logits(const Var<T>& logits, const std::vector<int>& targets) {
    auto [R, C] = detail::rows_cols(logits.val());
    if (R == 0) throw ValidationError("cross_entropy on an empty batch");
    if ((int64_t)targets.size() != R) throw ShapeError("cross_entropy: target count");
    auto probs = std::make_shared<Tensor<T>>(logits.val().shape);
    const T* xv = logits.val().data();
    T loss = 0;
    for (int64_t r = 0; r < R; ++r) {
        const T* row = xv + r * C;
        T mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        T sum = 0;
        for (int c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
        T lse = mx + std::log(sum);
        for (int c = 0; c < C; ++c) probs->v[r * C + c] = std::exp(row[c] - lse);
        loss += lse - row[targets[r]];
    }
    Tensor<T> out({1});
    out.v[0] = loss / R;
    auto ln = logits.node();
    auto tg = std::make_shared<std::vector<int>>(targets);
    int64_t Rl = R;
    int Cl = C;
    return detail::make_op<T>(std::move(out), {logits}, [ln, probs, tg, Rl, Cl](Node<T>* self) {
        ln->ensure_grad();
        T g = self->grad.v[0];
        T* dl = ln->grad.data();
        for (int64_t r = 0; r < Rl; ++r) {
            for (int c = 0; c < Cl; ++c) {
                T p = probs->v[r * Cl + c];
                dl[r * Cl + c] += g * (p - (c == (*tg)[r] ? T(1) : T(0))) / Rl;
            }
        }
    });
}

}  // namespace sarc::ad
