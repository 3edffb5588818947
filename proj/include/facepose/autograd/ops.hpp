#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "facepose/autograd/var.hpp"

namespace facepose::ag {

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapMat = Eigen::Map<RowMat<S>>;
template <class S>
using CMapMat = Eigen::Map<const RowMat<S>>;

namespace detail {
inline void require(bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::ShapeMismatch, what);
}
} // namespace detail

// ---------------------------------------------------------------- elementwise

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    detail::require(a.shape() == b.shape(), "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<S> out(a.value());
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_result<S>(a.shape(), std::move(out), {a, b}, [a, b](Node<S>& o) {
        for (const Var<S>* in : {&a, &b}) {
            if (S* g = grad_of(*in)) {
                for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
            }
        }
    });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
    detail::require(a.shape() == b.shape(), "sub: shape mismatch");
    std::vector<S> out(a.value());
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_result<S>(a.shape(), std::move(out), {a, b}, [a, b](Node<S>& o) {
        if (S* g = grad_of(a)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        if (S* g = grad_of(b)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
    detail::require(a.shape() == b.shape(), "mul: shape mismatch");
    std::vector<S> out(a.value());
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return make_result<S>(a.shape(), std::move(out), {a, b}, [a, b](Node<S>& o) {
        if (S* g = grad_of(a)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * b.value()[i];
        if (S* g = grad_of(b)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * a.value()[i];
    });
}

template <class S>
Var<S> scale(const Var<S>& a, S s) {
    std::vector<S> out(a.value());
    for (auto& v : out) v *= s;
    return make_result<S>(a.shape(), std::move(out), {a}, [a, s](Node<S>& o) {
        if (S* g = grad_of(a)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * s;
    });
}

template <class S>
Var<S> silu(const Var<S>& a) {
    std::vector<S> out(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / (S(1) + std::exp(-av[i]));
    return make_result<S>(a.shape(), std::move(out), {a}, [a](Node<S>& o) {
        S* g = grad_of(a);
        if (!g) return;
        const auto& av = a.value();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            const S sig = S(1) / (S(1) + std::exp(-av[i]));
            g[i] += o.grad[i] * sig * (S(1) + av[i] * (S(1) - sig));
        }
    });
}

/// a[N, ...] + b[1, ...] with b broadcast over the leading axis.
template <class S>
Var<S> add_broadcast0(const Var<S>& a, const Var<S>& b) {
    detail::require(a.rank() == b.rank() && b.dim(0) == 1, "add_broadcast0: b must be [1, ...]");
    for (std::size_t i = 1; i < a.rank(); ++i) detail::require(a.dim(i) == b.dim(i), "add_broadcast0: trailing dims differ");
    const std::size_t inner = b.size();
    const std::size_t outer = static_cast<std::size_t>(a.dim(0));
    std::vector<S> out(a.value());
    for (std::size_t n = 0; n < outer; ++n)
        for (std::size_t i = 0; i < inner; ++i) out[n * inner + i] += b.value()[i];
    return make_result<S>(a.shape(), std::move(out), {a, b}, [a, b, inner, outer](Node<S>& o) {
        if (S* g = grad_of(a)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        if (S* g = grad_of(b))
            for (std::size_t n = 0; n < outer; ++n)
                for (std::size_t i = 0; i < inner; ++i) g[i] += o.grad[n * inner + i];
    });
}

/// x[N, C, ...] + bias[C] on every position.
template <class S>
Var<S> add_channel_bias(const Var<S>& x, const Var<S>& bias) {
    detail::require(x.rank() >= 2 && bias.size() == static_cast<std::size_t>(x.dim(1)), "add_channel_bias: bias size");
    const std::size_t n = static_cast<std::size_t>(x.dim(0)), c = static_cast<std::size_t>(x.dim(1));
    const std::size_t inner = x.size() / (n * c);
    std::vector<S> out(x.value());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            S* p = &out[(i * c + ch) * inner];
            const S bv = bias.value()[ch];
            for (std::size_t k = 0; k < inner; ++k) p[k] += bv;
        }
    return make_result<S>(x.shape(), std::move(out), {x, bias}, [x, bias, n, c, inner](Node<S>& o) {
        if (S* g = grad_of(x)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        if (S* g = grad_of(bias))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const S* p = &o.grad[(i * c + ch) * inner];
                    S acc = 0;
                    for (std::size_t k = 0; k < inner; ++k) acc += p[k];
                    g[ch] += acc;
                }
    });
}

// ---------------------------------------------------------------- reductions

template <class S>
Var<S> mse(const Var<S>& a, const Var<S>& b) {
    detail::require(a.shape() == b.shape(), "mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t n = a.size();
    S acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const S d = a.value()[i] - b.value()[i];
        acc += d * d;
    }
    return make_result<S>({1}, {acc / static_cast<S>(n)}, {a, b}, [a, b, n](Node<S>& o) {
        const S k = S(2) * o.grad[0] / static_cast<S>(n);
        S* ga = grad_of(a);
        S* gb = grad_of(b);
        for (std::size_t i = 0; i < n; ++i) {
            const S d = (a.value()[i] - b.value()[i]) * k;
            if (ga) ga[i] += d;
            if (gb) gb[i] -= d;
        }
    });
}

/// Σ a·b over all elements; a convenient scalar probe for gradient checks.
template <class S>
Var<S> dot(const Var<S>& a, const Var<S>& b) {
    detail::require(a.shape() == b.shape(), "dot: shape mismatch");
    S acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.value()[i] * b.value()[i];
    return make_result<S>({1}, {acc}, {a, b}, [a, b](Node<S>& o) {
        if (S* g = grad_of(a)) for (std::size_t i = 0; i < a.size(); ++i) g[i] += o.grad[0] * b.value()[i];
        if (S* g = grad_of(b)) for (std::size_t i = 0; i < b.size(); ++i) g[i] += o.grad[0] * a.value()[i];
    });
}

// ---------------------------------------------------------------- layout

template <class S>
Var<S> reshape(const Var<S>& a, Shape shape) {
    detail::require(numel(shape) == a.size(), "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    return make_result<S>(std::move(shape), a.value(), {a}, [a](Node<S>& o) {
        if (S* g = grad_of(a)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    });
}

namespace detail {
inline std::vector<std::size_t> strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * static_cast<std::size_t>(s[i + 1]);
    return st;
}

/// For each output flat index, the source flat index under `perm`.
inline std::vector<std::size_t> permute_index(const Shape& in, const std::vector<int>& perm) {
    const auto in_st = strides(in);
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in[static_cast<std::size_t>(perm[i])];
    const std::size_t total = numel(in);
    std::vector<std::size_t> src(total);
    std::vector<int> idx(perm.size(), 0);
    for (std::size_t o = 0; o < total; ++o) {
        std::size_t s = 0;
        for (std::size_t d = 0; d < perm.size(); ++d) s += static_cast<std::size_t>(idx[d]) * in_st[static_cast<std::size_t>(perm[d])];
        src[o] = s;
        for (int d = static_cast<int>(perm.size()) - 1; d >= 0; --d) {
            if (++idx[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
            idx[static_cast<std::size_t>(d)] = 0;
        }
    }
    return src;
}
} // namespace detail

template <class S>
Var<S> permute(const Var<S>& a, const std::vector<int>& perm) {
    detail::require(perm.size() == a.rank(), "permute: rank mismatch");
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.dim(static_cast<std::size_t>(perm[i]));
    auto src = std::make_shared<std::vector<std::size_t>>(detail::permute_index(a.shape(), perm));
    std::vector<S> out(a.size());
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = a.value()[(*src)[o]];
    return make_result<S>(std::move(out_shape), std::move(out), {a}, [a, src](Node<S>& o) {
        if (S* g = grad_of(a)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[(*src)[i]] += o.grad[i];
    });
}

/// Concatenates along `axis`; all other dims must match.
template <class S>
Var<S> concat(const Var<S>& a, const Var<S>& b, std::size_t axis) {
    detail::require(a.rank() == b.rank() && axis < a.rank(), "concat: rank");
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) detail::require(a.dim(i) == b.dim(i), "concat: dims differ off-axis");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(a.dim(i));
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= static_cast<std::size_t>(a.dim(i));
    const std::size_t ca = static_cast<std::size_t>(a.dim(axis)) * inner;
    const std::size_t cb = static_cast<std::size_t>(b.dim(axis)) * inner;
    Shape shape = a.shape();
    shape[axis] += b.dim(axis);
    std::vector<S> out(a.size() + b.size());
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(&a.value()[o * ca], ca, &out[o * (ca + cb)]);
        std::copy_n(&b.value()[o * cb], cb, &out[o * (ca + cb) + ca]);
    }
    return make_result<S>(std::move(shape), std::move(out), {a, b}, [a, b, outer, ca, cb](Node<S>& o) {
        S* ga = grad_of(a);
        S* gb = grad_of(b);
        for (std::size_t i = 0; i < outer; ++i) {
            const S* src = &o.grad[i * (ca + cb)];
            if (ga) for (std::size_t k = 0; k < ca; ++k) ga[i * ca + k] += src[k];
            if (gb) for (std::size_t k = 0; k < cb; ++k) gb[i * cb + k] += src[ca + k];
        }
    });
}

/// [1, ...] → [n, ...]; gradients sum back over the copies.
template <class S>
Var<S> repeat0(const Var<S>& a, int n) {
    detail::require(a.rank() >= 1 && a.dim(0) == 1, "repeat0: leading dim must be 1");
    Shape shape = a.shape();
    shape[0] = n;
    const std::size_t inner = a.size();
    std::vector<S> out(inner * static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) std::copy(a.value().begin(), a.value().end(), out.begin() + static_cast<long>(i * inner));
    return make_result<S>(std::move(shape), std::move(out), {a}, [a, inner, n](Node<S>& o) {
        if (S* g = grad_of(a))
            for (int i = 0; i < n; ++i)
                for (std::size_t k = 0; k < inner; ++k) g[k] += o.grad[static_cast<std::size_t>(i) * inner + k];
    });
}

/// Rows [begin, end) of the leading axis.
template <class S>
Var<S> slice0(const Var<S>& a, int begin, int end) {
    detail::require(0 <= begin && begin <= end && end <= a.dim(0), "slice0: range");
    Shape shape = a.shape();
    shape[0] = end - begin;
    const std::size_t inner = a.size() / static_cast<std::size_t>(a.dim(0));
    std::vector<S> out(a.value().begin() + static_cast<long>(begin * inner), a.value().begin() + static_cast<long>(end * inner));
    return make_result<S>(std::move(shape), std::move(out), {a}, [a, begin, inner](Node<S>& o) {
        if (S* g = grad_of(a))
            for (std::size_t k = 0; k < o.grad.size(); ++k) g[static_cast<std::size_t>(begin) * inner + k] += o.grad[k];
    });
}

// ---------------------------------------------------------------- dense

/// x[..., K] · w[K, N] + b[N].
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
    detail::require(w.rank() == 2 && x.dim(x.rank() - 1) == w.dim(0), "linear: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    detail::require(b.size() == static_cast<std::size_t>(w.dim(1)), "linear: bias size");
    const int k = w.dim(0), n = w.dim(1);
    const int m = static_cast<int>(x.size() / static_cast<std::size_t>(k));
    Shape shape = x.shape();
    shape.back() = n;
    std::vector<S> out(static_cast<std::size_t>(m) * n);
    MapMat<S> Y(out.data(), m, n);
    Y.noalias() = CMapMat<S>(x.value().data(), m, k) * CMapMat<S>(w.value().data(), k, n);
    Y.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.value().data(), n);
    return make_result<S>(std::move(shape), std::move(out), {x, w, b}, [x, w, b, m, k, n](Node<S>& o) {
        CMapMat<S> dY(o.grad.data(), m, n);
        if (S* g = grad_of(x)) MapMat<S>(g, m, k).noalias() += dY * CMapMat<S>(w.value().data(), k, n).transpose();
        if (S* g = grad_of(w)) MapMat<S>(g, k, n).noalias() += CMapMat<S>(x.value().data(), m, k).transpose() * dY;
        if (S* g = grad_of(b)) Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(g, n) += dY.colwise().sum();
    });
}

// ---------------------------------------------------------------- convolution

struct ConvGeom {
    int n, cin, h, w, cout, k, stride, pad, ho, wo;
    int patch() const { return cin * k * k; }
    int positions() const { return ho * wo; }
};

namespace detail {

template <class S>
void im2col(const S* x, const ConvGeom& g, S* cols) {
    const int P = g.positions();
    for (int c = 0; c < g.cin; ++c)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                S* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * P;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        row[oy * g.wo + ox] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                                                  ? x[(static_cast<std::size_t>(c) * g.h + iy) * g.w + ix]
                                                  : S(0);
                    }
                }
            }
}

template <class S>
void col2im(const S* cols, const ConvGeom& g, S* dx) {
    const int P = g.positions();
    for (int c = 0; c < g.cin; ++c)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                const S* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * P;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.w) continue;
                        dx[(static_cast<std::size_t>(c) * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
                    }
                }
            }
}

} // namespace detail

/// x[N, Cin, H, W] ⊛ w[Cout, Cin, k, k] + b[Cout], zero padding.
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride = 1, int pad = 1) {
    detail::require(x.rank() == 4 && w.rank() == 4 && w.dim(1) == x.dim(1) && w.dim(2) == w.dim(3),
                    "conv2d: input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
    detail::require(b.size() == static_cast<std::size_t>(w.dim(0)), "conv2d: bias size");
    ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad, 0, 0};
    g.ho = (g.h + 2 * pad - g.k) / stride + 1;
    g.wo = (g.w + 2 * pad - g.k) / stride + 1;
    detail::require(g.ho > 0 && g.wo > 0, "conv2d: output would be empty");
    const int K = g.patch(), P = g.positions();
    std::vector<S> out(static_cast<std::size_t>(g.n) * g.cout * P);
    RowMat<S> cols(K, P);
    CMapMat<S> W(w.value().data(), g.cout, K);
    const Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> B(b.value().data(), g.cout);
    const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
    for (int i = 0; i < g.n; ++i) {
        detail::im2col(x.value().data() + i * in_stride, g, cols.data());
        MapMat<S> Y(out.data() + static_cast<std::size_t>(i) * g.cout * P, g.cout, P);
        Y.noalias() = W * cols;
        Y.colwise() += B;
    }
    return make_result<S>({g.n, g.cout, g.ho, g.wo}, std::move(out), {x, w, b}, [x, w, b, g, in_stride](Node<S>& o) {
        const int K = g.patch(), P = g.positions();
        S* gx = grad_of(x);
        S* gw = grad_of(w);
        S* gb = grad_of(b);
        CMapMat<S> W(w.value().data(), g.cout, K);
        RowMat<S> cols(K, P);
        RowMat<S> dcols(K, P);
        for (int i = 0; i < g.n; ++i) {
            CMapMat<S> dY(o.grad.data() + static_cast<std::size_t>(i) * g.cout * P, g.cout, P);
            if (gw) {
                detail::im2col(x.value().data() + i * in_stride, g, cols.data());
                MapMat<S>(gw, g.cout, K).noalias() += dY * cols.transpose();
            }
            if (gb) Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(gb, g.cout) += dY.rowwise().sum();
            if (gx) {
                dcols.noalias() = W.transpose() * dY;
                detail::col2im(dcols.data(), g, gx + i * in_stride);
            }
        }
    });
}

/// Nearest-neighbour 2× upsampling of [N, C, H, W].
template <class S>
Var<S> upsample2x(const Var<S>& x) {
    detail::require(x.rank() == 4, "upsample2x: rank 4 expected");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    std::vector<S> out(static_cast<std::size_t>(nc) * 4 * h * w);
    for (int p = 0; p < nc; ++p)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                out[(static_cast<std::size_t>(p) * 2 * h + y) * 2 * w + xx] = x.value()[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2];
    return make_result<S>({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out), {x}, [x, nc, h, w](Node<S>& o) {
        S* g = grad_of(x);
        if (!g) return;
        for (int p = 0; p < nc; ++p)
            for (int y = 0; y < 2 * h; ++y)
                for (int xx = 0; xx < 2 * w; ++xx)
                    g[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2] += o.grad[(static_cast<std::size_t>(p) * 2 * h + y) * 2 * w + xx];
    });
}

// ---------------------------------------------------------------- normalization

/// Group normalization of x[N, C, ...] with per-channel affine gamma/beta[C].
/// Statistics are per sample and group, so samples never interact.
template <class S>
Var<S> group_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, int groups, S eps = S(1e-5)) {
    detail::require(x.rank() >= 2 && x.dim(1) % groups == 0, "group_norm: channels not divisible by groups");
    detail::require(gamma.size() == static_cast<std::size_t>(x.dim(1)) && beta.size() == gamma.size(), "group_norm: affine size");
    const std::size_t n = static_cast<std::size_t>(x.dim(0)), c = static_cast<std::size_t>(x.dim(1));
    const std::size_t inner = x.size() / (n * c);
    const std::size_t cg = c / static_cast<std::size_t>(groups);
    const std::size_t m = cg * inner;
    auto xhat = std::make_shared<std::vector<S>>(x.size());
    auto inv_std = std::make_shared<std::vector<S>>(n * static_cast<std::size_t>(groups));
    std::vector<S> out(x.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t g = 0; g < static_cast<std::size_t>(groups); ++g) {
            const std::size_t base = (i * c + g * cg) * inner;
            S mean = 0;
            for (std::size_t k = 0; k < m; ++k) mean += x.value()[base + k];
            mean /= static_cast<S>(m);
            S var = 0;
            for (std::size_t k = 0; k < m; ++k) {
                const S d = x.value()[base + k] - mean;
                var += d * d;
            }
            var /= static_cast<S>(m);
            const S is = S(1) / std::sqrt(var + eps);
            (*inv_std)[i * static_cast<std::size_t>(groups) + g] = is;
            for (std::size_t k = 0; k < m; ++k) {
                const std::size_t ch = g * cg + k / inner;
                const S xh = (x.value()[base + k] - mean) * is;
                (*xhat)[base + k] = xh;
                out[base + k] = xh * gamma.value()[ch] + beta.value()[ch];
            }
        }
    return make_result<S>(x.shape(), std::move(out), {x, gamma, beta},
                          [x, gamma, beta, xhat, inv_std, n, c, inner, cg, m, groups](Node<S>& o) {
        S* gx = grad_of(x);
        S* gg = grad_of(gamma);
        S* gb = grad_of(beta);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t g = 0; g < static_cast<std::size_t>(groups); ++g) {
                const std::size_t base = (i * c + g * cg) * inner;
                S sum_d = 0, sum_dx = 0;
                for (std::size_t k = 0; k < m; ++k) {
                    const std::size_t ch = g * cg + k / inner;
                    const S dy = o.grad[base + k];
                    const S xh = (*xhat)[base + k];
                    if (gg) gg[ch] += dy * xh;
                    if (gb) gb[ch] += dy;
                    const S dxh = dy * gamma.value()[ch];
                    sum_d += dxh;
                    sum_dx += dxh * xh;
                }
                if (!gx) continue;
                const S is = (*inv_std)[i * static_cast<std::size_t>(groups) + g];
                const S mean_d = sum_d / static_cast<S>(m), mean_dx = sum_dx / static_cast<S>(m);
                for (std::size_t k = 0; k < m; ++k) {
                    const std::size_t ch = g * cg + k / inner;
                    const S dxh = o.grad[base + k] * gamma.value()[ch];
                    gx[base + k] += is * (dxh - mean_d - (*xhat)[base + k] * mean_dx);
                }
            }
    });
}

// ---------------------------------------------------------------- attention

enum class AttentionMix {
    Softmax,   // softmax(QKᵀ/√d)·V
    Identity,  // each query takes its own value row (requires Lq == Lk)
};

/// Batched single-head scaled dot-product attention.
/// q[B, Lq, d], k[B, Lk, d], v[B, Lk, dv] → [B, Lq, dv].
template <class S>
Var<S> attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, AttentionMix mix = AttentionMix::Softmax) {
    detail::require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "attention: rank 3 inputs");
    const int B = q.dim(0), Lq = q.dim(1), d = q.dim(2), Lk = k.dim(1), dv = v.dim(2);
    detail::require(k.dim(0) == B && v.dim(0) == B && k.dim(2) == d && v.dim(1) == Lk, "attention: shapes " +
                    shape_str(q.shape()) + " " + shape_str(k.shape()) + " " + shape_str(v.shape()));
    if (mix == AttentionMix::Identity) {
        detail::require(Lq == Lk && dv > 0, "attention: identity mix needs Lq == Lk");
        return make_result<S>({B, Lq, dv}, v.value(), {v}, [v](Node<S>& o) {
            if (S* g = grad_of(v)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        });
    }
    const S inv = S(1) / std::sqrt(static_cast<S>(d));
    auto probs = std::make_shared<std::vector<S>>(static_cast<std::size_t>(B) * Lq * Lk);
    std::vector<S> out(static_cast<std::size_t>(B) * Lq * dv);
    for (int bi = 0; bi < B; ++bi) {
        CMapMat<S> Q(q.value().data() + static_cast<std::size_t>(bi) * Lq * d, Lq, d);
        CMapMat<S> K(k.value().data() + static_cast<std::size_t>(bi) * Lk * d, Lk, d);
        CMapMat<S> V(v.value().data() + static_cast<std::size_t>(bi) * Lk * dv, Lk, dv);
        MapMat<S> Pm(probs->data() + static_cast<std::size_t>(bi) * Lq * Lk, Lq, Lk);
        Pm.noalias() = (Q * K.transpose()) * inv;
        for (int r = 0; r < Lq; ++r) {
            auto row = Pm.row(r);
            const S mx = row.maxCoeff();
            row = (row.array() - mx).exp();
            row /= row.sum();
        }
        MapMat<S>(out.data() + static_cast<std::size_t>(bi) * Lq * dv, Lq, dv).noalias() = Pm * V;
    }
    return make_result<S>({B, Lq, dv}, std::move(out), {q, k, v}, [q, k, v, probs, B, Lq, Lk, d, dv, inv](Node<S>& o) {
        S* gq = grad_of(q);
        S* gk = grad_of(k);
        S* gv = grad_of(v);
        RowMat<S> dP(Lq, Lk);
        for (int bi = 0; bi < B; ++bi) {
            CMapMat<S> Q(q.value().data() + static_cast<std::size_t>(bi) * Lq * d, Lq, d);
            CMapMat<S> K(k.value().data() + static_cast<std::size_t>(bi) * Lk * d, Lk, d);
            CMapMat<S> V(v.value().data() + static_cast<std::size_t>(bi) * Lk * dv, Lk, dv);
            CMapMat<S> P(probs->data() + static_cast<std::size_t>(bi) * Lq * Lk, Lq, Lk);
            CMapMat<S> dO(o.grad.data() + static_cast<std::size_t>(bi) * Lq * dv, Lq, dv);
            if (gv) MapMat<S>(gv + static_cast<std::size_t>(bi) * Lk * dv, Lk, dv).noalias() += P.transpose() * dO;
            if (!gq && !gk) continue;
            dP.noalias() = dO * V.transpose();
            // softmax backward: dS = P ⊙ (dP − rowsum(dP ⊙ P))
            const Eigen::Matrix<S, Eigen::Dynamic, 1> rs = (dP.array() * P.array()).rowwise().sum();
            dP = (P.array() * (dP.array().colwise() - rs.array())).matrix() * inv;
            if (gq) MapMat<S>(gq + static_cast<std::size_t>(bi) * Lq * d, Lq, d).noalias() += dP * K;
            if (gk) MapMat<S>(gk + static_cast<std::size_t>(bi) * Lk * d, Lk, d).noalias() += dP.transpose() * Q;
        }
    });
}

} // namespace facepose::ag
