#pragma once

// Reverse-mode autodiff over dense tensors. Graphs are built dynamically:
// every op returns a fresh node holding its value, its parents, and a closure
// that scatters the node's gradient into the parents. Templated on the scalar
// type; the pipeline runs float, the finite-difference oracles run double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "hsr/common.hpp"

namespace hsr::ad {

template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;
    std::vector<T> g;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Tensor>> parents;
    std::function<void(Tensor&)> backprop;

    size_t numel() const {
        size_t n = 1;
        for (int d : shape) n *= size_t(d);
        return n;
    }
    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), T(0));
    }
    void zero_grad() { g.assign(v.size(), T(0)); }
};

template <class T>
using Ptr = std::shared_ptr<Tensor<T>>;

namespace detail {

inline size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeMismatch("non-positive dimension");
        n *= size_t(d);
    }
    return n;
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

}  // namespace detail

template <class T>
Ptr<T> tensor(std::vector<int> shape, bool requires_grad = false) {
    auto t = std::make_shared<Tensor<T>>();
    t->v.assign(detail::shape_numel(shape), T(0));
    t->shape = std::move(shape);
    t->requires_grad = requires_grad;
    return t;
}

template <class T>
Ptr<T> tensor(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != detail::shape_numel(shape))
        throw ShapeMismatch("value count does not match shape " + detail::shape_str(shape));
    auto t = std::make_shared<Tensor<T>>();
    t->shape = std::move(shape);
    t->v = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

template <class T>
Ptr<T> node_like(std::vector<int> shape, std::vector<Ptr<T>> parents) {
    auto t = tensor<T>(std::move(shape));
    for (const auto& p : parents)
        if (p->requires_grad) t->requires_grad = true;
    t->parents = std::move(parents);
    return t;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

enum class Bin { add, sub, mul, div };

template <class T>
Ptr<T> binary(Bin op, const Ptr<T>& a, const Ptr<T>& b) {
    const bool a_scalar = a->numel() == 1, b_scalar = b->numel() == 1;
    if (!(a->shape == b->shape || a_scalar || b_scalar))
        throw ShapeMismatch("binary op on " + detail::shape_str(a->shape) + " vs " +
                            detail::shape_str(b->shape));
    const auto& big = b_scalar ? a : b;
    auto out = node_like<T>(big->shape, {a, b});
    const size_t n = out->numel();
    for (size_t i = 0; i < n; ++i) {
        T x = a->v[a_scalar ? 0 : i], y = b->v[b_scalar ? 0 : i];
        switch (op) {
            case Bin::add: out->v[i] = x + y; break;
            case Bin::sub: out->v[i] = x - y; break;
            case Bin::mul: out->v[i] = x * y; break;
            case Bin::div: out->v[i] = x / y; break;
        }
    }
    if (out->requires_grad)
        out->backprop = [op, a, b, a_scalar, b_scalar](Tensor<T>& o) {
            const size_t n = o.numel();
            if (a->requires_grad) a->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            for (size_t i = 0; i < n; ++i) {
                T go = o.g[i];
                T x = a->v[a_scalar ? 0 : i], y = b->v[b_scalar ? 0 : i];
                if (a->requires_grad) {
                    T da;
                    switch (op) {
                        case Bin::add: da = go; break;
                        case Bin::sub: da = go; break;
                        case Bin::mul: da = go * y; break;
                        case Bin::div: da = go / y; break;
                    }
                    a->g[a_scalar ? 0 : i] += da;
                }
                if (b->requires_grad) {
                    T db;
                    switch (op) {
                        case Bin::add: db = go; break;
                        case Bin::sub: db = -go; break;
                        case Bin::mul: db = go * x; break;
                        case Bin::div: db = -go * x / (y * y); break;
                    }
                    b->g[b_scalar ? 0 : i] += db;
                }
            }
        };
    return out;
}

template <class T> Ptr<T> add(const Ptr<T>& a, const Ptr<T>& b) { return binary(Bin::add, a, b); }
template <class T> Ptr<T> sub(const Ptr<T>& a, const Ptr<T>& b) { return binary(Bin::sub, a, b); }
template <class T> Ptr<T> mul(const Ptr<T>& a, const Ptr<T>& b) { return binary(Bin::mul, a, b); }
template <class T> Ptr<T> divide(const Ptr<T>& a, const Ptr<T>& b) { return binary(Bin::div, a, b); }

template <class T>
Ptr<T> scale(const Ptr<T>& a, double s) {
    auto out = node_like<T>(a->shape, {a});
    for (size_t i = 0; i < a->v.size(); ++i) out->v[i] = T(s) * a->v[i];
    if (out->requires_grad)
        out->backprop = [a, s](Tensor<T>& o) {
            a->ensure_grad();
            for (size_t i = 0; i < o.v.size(); ++i) a->g[i] += T(s) * o.g[i];
        };
    return out;
}

template <class T>
Ptr<T> relu(const Ptr<T>& a) {
    auto out = node_like<T>(a->shape, {a});
    for (size_t i = 0; i < a->v.size(); ++i) out->v[i] = a->v[i] > T(0) ? a->v[i] : T(0);
    if (out->requires_grad)
        out->backprop = [a](Tensor<T>& o) {
            a->ensure_grad();
            for (size_t i = 0; i < o.v.size(); ++i)
                if (a->v[i] > T(0)) a->g[i] += o.g[i];
        };
    return out;
}

template <class T>
Ptr<T> sigmoid(const Ptr<T>& a) {
    auto out = node_like<T>(a->shape, {a});
    for (size_t i = 0; i < a->v.size(); ++i) out->v[i] = T(1) / (T(1) + std::exp(-a->v[i]));
    if (out->requires_grad)
        out->backprop = [a](Tensor<T>& o) {
            a->ensure_grad();
            for (size_t i = 0; i < o.v.size(); ++i) {
                T y = o.v[i];
                a->g[i] += o.g[i] * y * (T(1) - y);
            }
        };
    return out;
}

// tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))
template <class T>
Ptr<T> gelu(const Ptr<T>& a) {
    static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    static constexpr double kA = 0.044715;
    auto out = node_like<T>(a->shape, {a});
    for (size_t i = 0; i < a->v.size(); ++i) {
        double x = double(a->v[i]);
        out->v[i] = T(0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))));
    }
    if (out->requires_grad)
        out->backprop = [a](Tensor<T>& o) {
            a->ensure_grad();
            for (size_t i = 0; i < o.v.size(); ++i) {
                double x = double(a->v[i]);
                double u = kC * (x + kA * x * x * x);
                double t = std::tanh(u);
                double du = kC * (1.0 + 3.0 * kA * x * x);
                double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                a->g[i] += o.g[i] * T(d);
            }
        };
    return out;
}

// ---------------------------------------------------------------------------
// matmul / transpose / reshape
// ---------------------------------------------------------------------------

template <class T>
Ptr<T> matmul(const Ptr<T>& a, const Ptr<T>& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw ShapeMismatch("matmul " + detail::shape_str(a->shape) + " x " +
                            detail::shape_str(b->shape));
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = node_like<T>({m, n}, {a, b});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int p = 0; p < k; ++p) acc += double(a->v[size_t(i) * k + p]) * double(b->v[size_t(p) * n + j]);
            out->v[size_t(i) * n + j] = T(acc);
        }
    if (out->requires_grad)
        out->backprop = [a, b, m, k, n](Tensor<T>& o) {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double acc = 0;
                        for (int j = 0; j < n; ++j)
                            acc += double(o.g[size_t(i) * n + j]) * double(b->v[size_t(p) * n + j]);
                        a->g[size_t(i) * k + p] += T(acc);
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < n; ++j) {
                        double acc = 0;
                        for (int i = 0; i < m; ++i)
                            acc += double(a->v[size_t(i) * k + p]) * double(o.g[size_t(i) * n + j]);
                        b->g[size_t(p) * n + j] += T(acc);
                    }
            }
        };
    return out;
}

template <class T>
Ptr<T> transpose(const Ptr<T>& a) {
    if (a->shape.size() != 2) throw ShapeMismatch("transpose needs a rank-2 tensor");
    const int m = a->shape[0], n = a->shape[1];
    auto out = node_like<T>({n, m}, {a});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->v[size_t(j) * m + i] = a->v[size_t(i) * n + j];
    if (out->requires_grad)
        out->backprop = [a, m, n](Tensor<T>& o) {
            a->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) a->g[size_t(i) * n + j] += o.g[size_t(j) * m + i];
        };
    return out;
}

template <class T>
Ptr<T> reshape(const Ptr<T>& a, std::vector<int> shape) {
    if (detail::shape_numel(shape) != a->numel())
        throw ShapeMismatch("reshape " + detail::shape_str(a->shape) + " -> " +
                            detail::shape_str(shape));
    auto out = node_like<T>(std::move(shape), {a});
    out->v = a->v;
    if (out->requires_grad)
        out->backprop = [a](Tensor<T>& o) {
            a->ensure_grad();
            for (size_t i = 0; i < o.v.size(); ++i) a->g[i] += o.g[i];
        };
    return out;
}

// ---------------------------------------------------------------------------
// conv2d (cross-correlation, zero padding, grouped)
// ---------------------------------------------------------------------------

template <class T>
Ptr<T> conv2d(const Ptr<T>& x, const Ptr<T>& w, const Ptr<T>& bias,
              int stride = 1, int pad = 0, int groups = 1) {
    if (x->shape.size() != 3 || w->shape.size() != 4)
        throw ShapeMismatch("conv2d expects CHW input and OIHW kernels");
    const int Ci = x->shape[0], H = x->shape[1], W = x->shape[2];
    const int Co = w->shape[0], Cig = w->shape[1], kh = w->shape[2], kw = w->shape[3];
    if (groups < 1 || Ci % groups != 0 || Co % groups != 0)
        throw ShapeMismatch("channels not divisible by groups");
    if (Cig != Ci / groups)
        throw ShapeMismatch("kernel expects " + std::to_string(Cig) + " input channels/group, got " +
                            std::to_string(Ci / groups));
    if (bias && (bias->shape != std::vector<int>{Co}))
        throw ShapeMismatch("bias shape must be (C_out)");
    if ((H + 2 * pad - kh) % stride != 0 || (W + 2 * pad - kw) % stride != 0 ||
        H + 2 * pad < kh || W + 2 * pad < kw)
        throw NonIntegralOutput("conv2d output size is not integral for input " +
                                detail::shape_str(x->shape));
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;

    std::vector<Ptr<T>> parents{x, w};
    if (bias) parents.push_back(bias);
    auto out = node_like<T>({Co, Ho, Wo}, std::move(parents));

    // valid output range for kernel offset (i or j): positions whose sampled
    // input index lies inside [0, dim)
    auto lo_of = [stride, pad](int off) {
        int lo = 0;
        while (lo * stride - pad + off < 0) ++lo;
        return lo;
    };
    auto hi_of = [stride, pad](int off, int dim, int odim) {
        int hi = odim - 1;
        while (hi >= 0 && hi * stride - pad + off >= dim) --hi;
        return hi;
    };

    const int cog = Co / groups;
    std::vector<double> acc(size_t(Ho) * Wo);
    for (int oc = 0; oc < Co; ++oc) {
        const int grp = oc / cog;
        std::fill(acc.begin(), acc.end(), bias ? double(bias->v[oc]) : 0.0);
        for (int icg = 0; icg < Cig; ++icg) {
            const int ic = grp * Cig + icg;
            const T* xin = x->v.data() + size_t(ic) * H * W;
            for (int i = 0; i < kh; ++i) {
                const int oh_lo = lo_of(i), oh_hi = hi_of(i, H, Ho);
                for (int j = 0; j < kw; ++j) {
                    const double wv = double(w->v[((size_t(oc) * Cig + icg) * kh + i) * kw + j]);
                    const int ow_lo = lo_of(j), ow_hi = hi_of(j, W, Wo);
                    for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                        const int ih = oh * stride - pad + i;
                        const T* xrow = xin + size_t(ih) * W - pad + j;
                        double* arow = acc.data() + size_t(oh) * Wo;
                        for (int ow = ow_lo; ow <= ow_hi; ++ow)
                            arow[ow] += wv * double(xrow[size_t(ow) * stride]);
                    }
                }
            }
        }
        T* orow = out->v.data() + size_t(oc) * Ho * Wo;
        for (size_t i = 0; i < acc.size(); ++i) orow[i] = T(acc[i]);
    }

    if (out->requires_grad)
        out->backprop = [x, w, bias, stride, pad, groups, Ci, H, W, Co, Cig, kh, kw, Ho, Wo,
                         lo_of, hi_of](Tensor<T>& o) {
            const int cog = Co / groups;
            if (bias && bias->requires_grad) {
                bias->ensure_grad();
                for (int oc = 0; oc < Co; ++oc) {
                    double acc = 0;
                    const T* grow = o.g.data() + size_t(oc) * Ho * Wo;
                    for (size_t i = 0; i < size_t(Ho) * Wo; ++i) acc += double(grow[i]);
                    bias->g[oc] += T(acc);
                }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                for (int oc = 0; oc < Co; ++oc) {
                    const int grp = oc / cog;
                    const T* grow = o.g.data() + size_t(oc) * Ho * Wo;
                    for (int icg = 0; icg < Cig; ++icg) {
                        const int ic = grp * Cig + icg;
                        const T* xin = x->v.data() + size_t(ic) * H * W;
                        for (int i = 0; i < kh; ++i) {
                            const int oh_lo = lo_of(i), oh_hi = hi_of(i, H, Ho);
                            for (int j = 0; j < kw; ++j) {
                                const int ow_lo = lo_of(j), ow_hi = hi_of(j, W, Wo);
                                double acc = 0;
                                for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                                    const int ih = oh * stride - pad + i;
                                    const T* xrow = xin + size_t(ih) * W - pad + j;
                                    const T* gr = grow + size_t(oh) * Wo;
                                    for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                        acc += double(gr[ow]) * double(xrow[size_t(ow) * stride]);
                                }
                                w->g[((size_t(oc) * Cig + icg) * kh + i) * kw + j] += T(acc);
                            }
                        }
                    }
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                for (int oc = 0; oc < Co; ++oc) {
                    const int grp = oc / cog;
                    const T* grow = o.g.data() + size_t(oc) * Ho * Wo;
                    for (int icg = 0; icg < Cig; ++icg) {
                        const int ic = grp * Cig + icg;
                        T* gx = x->g.data() + size_t(ic) * H * W;
                        for (int i = 0; i < kh; ++i) {
                            const int oh_lo = lo_of(i), oh_hi = hi_of(i, H, Ho);
                            for (int j = 0; j < kw; ++j) {
                                const T wv = w->v[((size_t(oc) * Cig + icg) * kh + i) * kw + j];
                                const int ow_lo = lo_of(j), ow_hi = hi_of(j, W, Wo);
                                for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                                    const int ih = oh * stride - pad + i;
                                    T* gxrow = gx + size_t(ih) * W - pad + j;
                                    const T* gr = grow + size_t(oh) * Wo;
                                    for (int ow = ow_lo; ow <= ow_hi; ++ow)
                                        gxrow[size_t(ow) * stride] += wv * gr[ow];
                                }
                            }
                        }
                    }
                }
            }
        };
    return out;
}

template <class T>
Ptr<T> conv2d(const Ptr<T>& x, const Ptr<T>& w, int stride = 1, int pad = 0, int groups = 1) {
    return conv2d(x, w, Ptr<T>{}, stride, pad, groups);
}

// ---------------------------------------------------------------------------
// pixel shuffle / unshuffle: out[c][r h + i][r w + j] = in[c r^2 + i r + j][h][w]
// ---------------------------------------------------------------------------

template <class T>
Ptr<T> pixel_shuffle(const Ptr<T>& x, int r) {
    if (x->shape.size() != 3) throw ShapeMismatch("pixel_shuffle expects CHW");
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    if (C % (r * r) != 0)
        throw IndivisibleDims("channels " + std::to_string(C) + " not divisible by r^2");
    const int Co = C / (r * r);
    auto out = node_like<T>({Co, H * r, W * r}, {x});
    for (int c = 0; c < Co; ++c)
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
                const T* src = x->v.data() + size_t(c * r * r + i * r + j) * H * W;
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w)
                        out->v[(size_t(c) * H * r + size_t(h) * r + i) * W * r + size_t(w) * r + j] =
                            src[size_t(h) * W + w];
            }
    if (out->requires_grad)
        out->backprop = [x, r, Co, H, W](Tensor<T>& o) {
            x->ensure_grad();
            for (int c = 0; c < Co; ++c)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j) {
                        T* dst = x->g.data() + size_t(c * r * r + i * r + j) * H * W;
                        for (int h = 0; h < H; ++h)
                            for (int w = 0; w < W; ++w)
                                dst[size_t(h) * W + w] +=
                                    o.g[(size_t(c) * H * r + size_t(h) * r + i) * W * r +
                                        size_t(w) * r + j];
                    }
        };
    return out;
}

template <class T>
Ptr<T> pixel_unshuffle(const Ptr<T>& x, int r) {
    if (x->shape.size() != 3) throw ShapeMismatch("pixel_unshuffle expects CHW");
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    if (H % r != 0 || W % r != 0)
        throw IndivisibleDims("spatial dims " + std::to_string(H) + "x" + std::to_string(W) +
                              " not divisible by " + std::to_string(r));
    const int Ho = H / r, Wo = W / r;
    auto out = node_like<T>({C * r * r, Ho, Wo}, {x});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
                T* dst = out->v.data() + size_t(c * r * r + i * r + j) * Ho * Wo;
                const T* src = x->v.data() + size_t(c) * H * W;
                for (int h = 0; h < Ho; ++h)
                    for (int w = 0; w < Wo; ++w)
                        dst[size_t(h) * Wo + w] = src[(size_t(h) * r + i) * W + size_t(w) * r + j];
            }
    if (out->requires_grad)
        out->backprop = [x, r, C, H, W, Ho, Wo](Tensor<T>& o) {
            x->ensure_grad();
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j) {
                        const T* src = o.g.data() + size_t(c * r * r + i * r + j) * Ho * Wo;
                        T* dst = x->g.data() + size_t(c) * H * W;
                        for (int h = 0; h < Ho; ++h)
                            for (int w = 0; w < Wo; ++w)
                                dst[(size_t(h) * r + i) * W + size_t(w) * r + j] +=
                                    src[size_t(h) * Wo + w];
                    }
        };
    return out;
}

// ---------------------------------------------------------------------------
// normalization / softmax along an axis (viewed as [outer, n, inner])
// ---------------------------------------------------------------------------

namespace detail {
template <class T>
void axis_view(const Ptr<T>& x, int axis, size_t& outer, size_t& n, size_t& inner) {
    if (axis < 0 || axis >= int(x->shape.size())) throw ShapeMismatch("axis out of range");
    outer = inner = 1;
    for (int d = 0; d < axis; ++d) outer *= size_t(x->shape[d]);
    n = size_t(x->shape[axis]);
    for (int d = axis + 1; d < int(x->shape.size()); ++d) inner *= size_t(x->shape[d]);
}
}  // namespace detail

template <class T>
Ptr<T> layer_norm(const Ptr<T>& x, const Ptr<T>& gamma, const Ptr<T>& beta, int axis,
                  double eps = 1e-5) {
    size_t outer, n, inner;
    detail::axis_view(x, axis, outer, n, inner);
    if (gamma->numel() != n || beta->numel() != n)
        throw ShapeMismatch("layer_norm scale/shift must have the axis length");
    auto out = node_like<T>(x->shape, {x, gamma, beta});
    std::vector<T> xhat(x->numel());
    std::vector<T> istd(outer * inner);
    for (size_t o = 0; o < outer; ++o)
        for (size_t in = 0; in < inner; ++in) {
            double mean = 0, var = 0;
            for (size_t k = 0; k < n; ++k) mean += double(x->v[(o * n + k) * inner + in]);
            mean /= double(n);
            for (size_t k = 0; k < n; ++k) {
                double d = double(x->v[(o * n + k) * inner + in]) - mean;
                var += d * d;
            }
            var /= double(n);
            double is = 1.0 / std::sqrt(var + eps);
            istd[o * inner + in] = T(is);
            for (size_t k = 0; k < n; ++k) {
                size_t idx = (o * n + k) * inner + in;
                T xh = T((double(x->v[idx]) - mean) * is);
                xhat[idx] = xh;
                out->v[idx] = xh * gamma->v[k] + beta->v[k];
            }
        }
    if (out->requires_grad)
        out->backprop = [x, gamma, beta, outer, n, inner, xhat = std::move(xhat),
                         istd = std::move(istd)](Tensor<T>& o) {
            if (gamma->requires_grad) gamma->ensure_grad();
            if (beta->requires_grad) beta->ensure_grad();
            if (x->requires_grad) x->ensure_grad();
            for (size_t ot = 0; ot < outer; ++ot)
                for (size_t in = 0; in < inner; ++in) {
                    double sum_dy = 0, sum_dyxh = 0;
                    for (size_t k = 0; k < n; ++k) {
                        size_t idx = (ot * n + k) * inner + in;
                        double dy = double(o.g[idx]) * double(gamma->v[k]);
                        sum_dy += dy;
                        sum_dyxh += dy * double(xhat[idx]);
                    }
                    sum_dy /= double(n);
                    sum_dyxh /= double(n);
                    for (size_t k = 0; k < n; ++k) {
                        size_t idx = (ot * n + k) * inner + in;
                        if (gamma->requires_grad) gamma->g[k] += o.g[idx] * xhat[idx];
                        if (beta->requires_grad) beta->g[k] += o.g[idx];
                        if (x->requires_grad) {
                            double dy = double(o.g[idx]) * double(gamma->v[k]);
                            x->g[idx] += T((dy - sum_dy - double(xhat[idx]) * sum_dyxh) *
                                           double(istd[ot * inner + in]));
                        }
                    }
                }
        };
    return out;
}

template <class T>
Ptr<T> softmax(const Ptr<T>& x, int axis) {
    size_t outer, n, inner;
    detail::axis_view(x, axis, outer, n, inner);
    auto out = node_like<T>(x->shape, {x});
    for (size_t o = 0; o < outer; ++o)
        for (size_t in = 0; in < inner; ++in) {
            double mx = -std::numeric_limits<double>::infinity();
            for (size_t k = 0; k < n; ++k)
                mx = std::max(mx, double(x->v[(o * n + k) * inner + in]));
            double denom = 0;
            for (size_t k = 0; k < n; ++k)
                denom += std::exp(double(x->v[(o * n + k) * inner + in]) - mx);
            for (size_t k = 0; k < n; ++k) {
                size_t idx = (o * n + k) * inner + in;
                out->v[idx] = T(std::exp(double(x->v[idx]) - mx) / denom);
            }
        }
    if (out->requires_grad)
        out->backprop = [x, outer, n, inner](Tensor<T>& o) {
            x->ensure_grad();
            for (size_t ot = 0; ot < outer; ++ot)
                for (size_t in = 0; in < inner; ++in) {
                    double dot = 0;
                    for (size_t k = 0; k < n; ++k) {
                        size_t idx = (ot * n + k) * inner + in;
                        dot += double(o.v[idx]) * double(o.g[idx]);
                    }
                    for (size_t k = 0; k < n; ++k) {
                        size_t idx = (ot * n + k) * inner + in;
                        x->g[idx] += T(double(o.v[idx]) * (double(o.g[idx]) - dot));
                    }
                }
        };
    return out;
}

// ---------------------------------------------------------------------------
// slicing / padding / reductions
// ---------------------------------------------------------------------------

template <class T>
Ptr<T> slice_channels(const Ptr<T>& x, int start, int len) {
    if (x->shape.size() != 3) throw ShapeMismatch("slice_channels expects CHW");
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    if (start < 0 || len <= 0 || start + len > C) throw ShapeMismatch("channel slice out of range");
    auto out = node_like<T>({len, H, W}, {x});
    const size_t plane = size_t(H) * W;
    std::copy(x->v.begin() + size_t(start) * plane, x->v.begin() + size_t(start + len) * plane,
              out->v.begin());
    if (out->requires_grad)
        out->backprop = [x, start, plane](Tensor<T>& o) {
            x->ensure_grad();
            for (size_t i = 0; i < o.v.size(); ++i) x->g[size_t(start) * plane + i] += o.g[i];
        };
    return out;
}

template <class T>
Ptr<T> concat_channels(const std::vector<Ptr<T>>& xs) {
    if (xs.empty()) throw ShapeMismatch("concat of nothing");
    const int H = xs[0]->shape[1], W = xs[0]->shape[2];
    int C = 0;
    for (const auto& x : xs) {
        if (x->shape.size() != 3 || x->shape[1] != H || x->shape[2] != W)
            throw ShapeMismatch("concat_channels needs matching CHW spatial dims");
        C += x->shape[0];
    }
    auto out = node_like<T>({C, H, W}, xs);
    size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x->v.begin(), x->v.end(), out->v.begin() + off);
        off += x->v.size();
    }
    if (out->requires_grad)
        out->backprop = [xs](Tensor<T>& o) {
            size_t off = 0;
            for (const auto& x : xs) {
                if (x->requires_grad) {
                    x->ensure_grad();
                    for (size_t i = 0; i < x->v.size(); ++i) x->g[i] += o.g[off + i];
                }
                off += x->v.size();
            }
        };
    return out;
}

/// x[c][h][w] + b[c]
template <class T>
Ptr<T> add_channel_bias(const Ptr<T>& x, const Ptr<T>& b) {
    if (x->shape.size() != 3 || b->shape != std::vector<int>{x->shape[0]})
        throw ShapeMismatch("add_channel_bias expects CHW plus a (C) bias");
    const int C = x->shape[0];
    const size_t plane = size_t(x->shape[1]) * x->shape[2];
    auto out = node_like<T>(x->shape, {x, b});
    for (int c = 0; c < C; ++c)
        for (size_t i = 0; i < plane; ++i)
            out->v[size_t(c) * plane + i] = x->v[size_t(c) * plane + i] + b->v[c];
    if (out->requires_grad)
        out->backprop = [x, b, C, plane](Tensor<T>& o) {
            if (x->requires_grad) {
                x->ensure_grad();
                for (size_t i = 0; i < o.v.size(); ++i) x->g[i] += o.g[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int c = 0; c < C; ++c) {
                    double acc = 0;
                    for (size_t i = 0; i < plane; ++i) acc += double(o.g[size_t(c) * plane + i]);
                    b->g[c] += T(acc);
                }
            }
        };
    return out;
}

/// Reflect-pad the bottom/right edges (no edge repeat); pad must be < dim.
template <class T>
Ptr<T> reflect_pad2d(const Ptr<T>& x, int pad_h, int pad_w) {
    if (x->shape.size() != 3) throw ShapeMismatch("reflect_pad2d expects CHW");
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    if (pad_h >= H || pad_w >= W) throw ShapeMismatch("reflect padding must be smaller than dims");
    const int Ho = H + pad_h, Wo = W + pad_w;
    auto src_h = [H](int h) { return h < H ? h : 2 * H - 2 - h; };
    auto src_w = [W](int w) { return w < W ? w : 2 * W - 2 - w; };
    auto out = node_like<T>({C, Ho, Wo}, {x});
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < Ho; ++h)
            for (int w = 0; w < Wo; ++w)
                out->v[(size_t(c) * Ho + h) * Wo + w] =
                    x->v[(size_t(c) * H + src_h(h)) * W + src_w(w)];
    if (out->requires_grad)
        out->backprop = [x, C, H, W, Ho, Wo, src_h, src_w](Tensor<T>& o) {
            x->ensure_grad();
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < Ho; ++h)
                    for (int w = 0; w < Wo; ++w)
                        x->g[(size_t(c) * H + src_h(h)) * W + src_w(w)] +=
                            o.g[(size_t(c) * Ho + h) * Wo + w];
        };
    return out;
}

/// Top-left crop to (h, w).
template <class T>
Ptr<T> crop2d(const Ptr<T>& x, int h, int w) {
    if (x->shape.size() != 3) throw ShapeMismatch("crop2d expects CHW");
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    if (h > H || w > W || h <= 0 || w <= 0) throw ShapeMismatch("crop larger than tensor");
    auto out = node_like<T>({C, h, w}, {x});
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                out->v[(size_t(c) * h + i) * w + j] = x->v[(size_t(c) * H + i) * W + j];
    if (out->requires_grad)
        out->backprop = [x, C, H, W, h, w](Tensor<T>& o) {
            x->ensure_grad();
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j)
                        x->g[(size_t(c) * H + i) * W + j] += o.g[(size_t(c) * h + i) * w + j];
        };
    return out;
}

template <class T>
Ptr<T> sum(const Ptr<T>& x) {
    auto out = node_like<T>({1}, {x});
    double acc = 0;
    for (T v : x->v) acc += double(v);
    out->v[0] = T(acc);
    if (out->requires_grad)
        out->backprop = [x](Tensor<T>& o) {
            x->ensure_grad();
            for (size_t i = 0; i < x->v.size(); ++i) x->g[i] += o.g[0];
        };
    return out;
}

template <class T>
Ptr<T> mean(const Ptr<T>& x) {
    auto out = node_like<T>({1}, {x});
    double acc = 0;
    for (T v : x->v) acc += double(v);
    const double inv = 1.0 / double(x->numel());
    out->v[0] = T(acc * inv);
    if (out->requires_grad)
        out->backprop = [x, inv](Tensor<T>& o) {
            x->ensure_grad();
            for (size_t i = 0; i < x->v.size(); ++i) x->g[i] += T(double(o.g[0]) * inv);
        };
    return out;
}

/// Mean over elements of |pred - gt| / max(gt, eps). Gradient flows to pred
/// only; gt is treated as a constant even if it requires grad.
template <class T>
Ptr<T> mrae(const Ptr<T>& pred, const Ptr<T>& gt, double eps = 1e-8) {
    if (pred->shape != gt->shape)
        throw ShapeMismatch("mrae " + detail::shape_str(pred->shape) + " vs " +
                            detail::shape_str(gt->shape));
    auto out = node_like<T>({1}, {pred});
    out->requires_grad = pred->requires_grad;
    const size_t n = pred->numel();
    double acc = 0;
    for (size_t i = 0; i < n; ++i)
        acc += std::abs(double(pred->v[i]) - double(gt->v[i])) /
               std::max(double(gt->v[i]), eps);
    out->v[0] = T(acc / double(n));
    if (out->requires_grad)
        out->backprop = [pred, gt, eps, n](Tensor<T>& o) {
            pred->ensure_grad();
            const double inv_n = 1.0 / double(n);
            for (size_t i = 0; i < n; ++i) {
                double d = double(pred->v[i]) - double(gt->v[i]);
                double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                pred->g[i] += T(double(o.g[0]) * s * inv_n / std::max(double(gt->v[i]), eps));
            }
        };
    return out;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class T>
void backward(const Ptr<T>& loss) {
    if (loss->numel() != 1) throw NonScalarLoss("backward requires a scalar loss");
    // iterative post-order over the grad-requiring subgraph
    std::vector<Tensor<T>*> order;
    std::unordered_set<Tensor<T>*> seen;
    struct Frame {
        Tensor<T>* node;
        size_t next_parent;
    };
    std::vector<Frame> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Tensor<T>* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->g[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor<T>* node = *it;
        if (node->backprop) {
            node->ensure_grad();
            node->backprop(*node);
        }
    }
}

// ---------------------------------------------------------------------------
// finite-difference gradient checker
// ---------------------------------------------------------------------------

/// Compares analytic gradients of a scalar-valued tensor function against
/// central differences. Returns the max relative error, with denominator
/// max(|analytic|, |numeric|, 1e-8). max_per_tensor < numel samples a random
/// subset of elements per input.
template <class T, class Fn>
double grad_check(Fn&& fn, const std::vector<Ptr<T>>& inputs, double eps = 1e-4,
                  size_t max_per_tensor = size_t(-1), uint64_t sample_seed = 0) {
    for (auto& in : inputs) in->zero_grad();
    auto out = fn(inputs);
    if (out->numel() != 1) throw NonScalarLoss("grad_check function must produce a scalar");
    backward(out);
    std::vector<std::vector<T>> analytic;
    for (auto& in : inputs) {
        in->ensure_grad();
        analytic.push_back(in->g);
    }

    Rng rng(sample_seed);
    double max_err = 0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        auto& in = inputs[t];
        if (!in->requires_grad) continue;
        std::vector<size_t> indices(in->numel());
        std::iota(indices.begin(), indices.end(), size_t(0));
        if (max_per_tensor < indices.size()) {
            rng.shuffle(indices.begin(), indices.end());
            indices.resize(max_per_tensor);
        }
        for (size_t idx : indices) {
            const T saved = in->v[idx];
            in->v[idx] = T(double(saved) + eps);
            double f_plus = double(fn(inputs)->v[0]);
            in->v[idx] = T(double(saved) - eps);
            double f_minus = double(fn(inputs)->v[0]);
            in->v[idx] = saved;
            double numeric = (f_plus - f_minus) / (2 * eps);
            double a = double(analytic[t][idx]);
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_err = std::max(max_err, std::abs(a - numeric) / denom);
        }
    }
    return max_err;
}

}  // namespace hsr::ad
