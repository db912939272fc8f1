// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <type_traits>

#include "vaerepa/kernels/kernels.hpp"

namespace vaerepa::ad {

namespace km = vaerepa::kernels;

namespace {

template <typename T>
std::size_t rows_of(const Tensor<T>& t) {
    return t.rank() == 0 ? 1 : t.size() / t.shape().back();
}

}  // namespace

template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& wv = g.value(w);
    require(wv.rank() == 2 && xv.rank() >= 1 && xv.shape().back() == wv.dim(0), ErrorKind::Shape,
            "linear: input {} vs weight {}", shape_str(xv.shape()), shape_str(wv.shape()));
    const std::size_t n = rows_of(xv), in = wv.dim(0), out = wv.dim(1);
    Shape ys = xv.shape();
    ys.back() = out;
    Tensor<T> y(ys);
    if (b.valid()) {
        const Tensor<T>& bv = g.value(b);
        require(bv.size() == out, ErrorKind::Shape, "linear: bias size {} vs {}", bv.size(), out);
        for (std::size_t r = 0; r < n; ++r) std::copy(bv.data(), bv.data() + out, y.data() + r * out);
    }
    km::matmul_nn(n, out, in, xv.data(), wv.data(), y.data(), b.valid());
    return g.record(std::move(y), {x, w, b}, [x, w, b, n, in, out](Graph<T>& g, int self) {
        const std::vector<T>& dy = g.grad_of(self);
        if (g.needs_grad(x)) km::matmul_nt(n, in, out, dy.data(), g.value(w).data(), g.grad(x).data(), true);
        if (g.needs_grad(w)) km::matmul_tn(in, out, n, g.value(x).data(), dy.data(), g.grad(w).data(), true);
        if (g.needs_grad(b)) {
            auto& db = g.grad(b);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < out; ++c) db[c] += dy[r * out + c];
        }
    });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    require(av.size() == bv.size(), ErrorKind::Shape, "add: {} vs {}", shape_str(av.shape()), shape_str(bv.shape()));
    Tensor<T> y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    return g.record(std::move(y), {a, b}, [a, b](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        for (Var v : {a, b}) {
            if (!g.needs_grad(v)) continue;
            auto& d = g.grad(v);
            for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
        }
    });
}

template <typename T>
Var add_tiled(Graph<T>& g, Var a, Var b) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    const std::size_t m = bv.size();
    require(m > 0 && av.size() % m == 0, ErrorKind::Shape, "add_tiled: {} does not tile {}", shape_str(bv.shape()),
            shape_str(av.shape()));
    Tensor<T> y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i % m];
    return g.record(std::move(y), {a, b}, [a, b, m](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        if (g.needs_grad(a)) {
            auto& d = g.grad(a);
            for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
        }
        if (g.needs_grad(b)) {
            auto& d = g.grad(b);
            for (std::size_t i = 0; i < dy.size(); ++i) d[i % m] += dy[i];
        }
    });
}

template <typename T>
Var scale(Graph<T>& g, Var a, T s) {
    const Tensor<T>& av = g.value(a);
    Tensor<T> y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = s * av[i];
    return g.record(std::move(y), {a}, [a, s](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        auto& d = g.grad(a);
        for (std::size_t i = 0; i < dy.size(); ++i) d[i] += s * dy[i];
    });
}

template <typename T>
Var silu(Graph<T>& g, Var x) {
    const Tensor<T>& xv = g.value(x);
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] / (T(1) + std::exp(-xv[i]));
    return g.record(std::move(y), {x}, [x](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        const auto& xv = g.value(x);
        auto& d = g.grad(x);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const T s = T(1) / (T(1) + std::exp(-xv[i]));
            d[i] += dy[i] * s * (T(1) + xv[i] * (T(1) - s));
        }
    });
}

template <typename T>
Var gelu(Graph<T>& g, Var x) {
    constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T k = T(0.044715);
    const Tensor<T>& xv = g.value(x);
    Tensor<T> y(xv.shape());
    std::vector<T> th(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const T v = xv[i];
        // tanh(u) = 1 - 2 / (1 + e^{2u}); saturates cleanly at both ends.
        th[i] = T(1) - T(2) / (T(1) + std::exp(T(2) * c * (v + k * v * v * v)));
        y[i] = T(0.5) * v * (T(1) + th[i]);
    }
    return g.record(std::move(y), {x}, [x, th = std::move(th)](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        const auto& xv = g.value(x);
        auto& d = g.grad(x);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const T v = xv[i];
            const T dudx = c * (T(1) + T(3) * k * v * v);
            d[i] += dy[i] * (T(0.5) * (T(1) + th[i]) + T(0.5) * v * (T(1) - th[i] * th[i]) * dudx);
        }
    });
}

template <typename T>
Var layer_norm(Graph<T>& g, Var x, T eps) {
    const Tensor<T>& xv = g.value(x);
    const std::size_t d = xv.shape().back(), n = rows_of(xv);
    Tensor<T> y(xv.shape());
    std::vector<T> inv_std(n);
    for (std::size_t r = 0; r < n; ++r) {
        const T* row = xv.data() + r * d;
        T mean = 0;
        for (std::size_t c = 0; c < d; ++c) mean += row[c];
        mean /= T(d);
        T var = 0;
        for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= T(d);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) y[r * d + c] = (row[c] - mean) * inv_std[r];
    }
    return g.record(std::move(y), {x}, [x, inv_std = std::move(inv_std), d, n](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        const auto& xhat = g.value(Var{self});
        auto& dx = g.grad(x);
        for (std::size_t r = 0; r < n; ++r) {
            T mean_dy = 0, mean_dy_xhat = 0;
            for (std::size_t c = 0; c < d; ++c) {
                mean_dy += dy[r * d + c];
                mean_dy_xhat += dy[r * d + c] * xhat[r * d + c];
            }
            mean_dy /= T(d);
            mean_dy_xhat /= T(d);
            for (std::size_t c = 0; c < d; ++c)
                dx[r * d + c] += inv_std[r] * (dy[r * d + c] - mean_dy - xhat[r * d + c] * mean_dy_xhat);
        }
    });
}

template <typename T>
Var modulate(Graph<T>& g, Var x, Var shift, Var scale_, std::size_t group_rows) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& sh = g.value(shift);
    const Tensor<T>& sc = g.value(scale_);
    const std::size_t d = xv.shape().back(), n = rows_of(xv);
    require(n % group_rows == 0 && sh.size() == (n / group_rows) * d && sc.size() == sh.size(), ErrorKind::Shape,
            "modulate: x {} shift {} scale {}", shape_str(xv.shape()), shape_str(sh.shape()), shape_str(sc.shape()));
    Tensor<T> y(xv.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t gi = (r / group_rows) * d;
        for (std::size_t c = 0; c < d; ++c) y[r * d + c] = xv[r * d + c] * (T(1) + sc[gi + c]) + sh[gi + c];
    }
    return g.record(std::move(y), {x, shift, scale_}, [x, shift, scale_, group_rows, d, n](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        const auto& xv = g.value(x);
        const auto& sc = g.value(scale_);
        T* dx = g.needs_grad(x) ? g.grad(x).data() : nullptr;
        T* dsh = g.needs_grad(shift) ? g.grad(shift).data() : nullptr;
        T* dsc = g.needs_grad(scale_) ? g.grad(scale_).data() : nullptr;
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t gi = (r / group_rows) * d;
            for (std::size_t c = 0; c < d; ++c) {
                const T v = dy[r * d + c];
                if (dx) dx[r * d + c] += v * (T(1) + sc[gi + c]);
                if (dsh) dsh[gi + c] += v;
                if (dsc) dsc[gi + c] += v * xv[r * d + c];
            }
        }
    });
}

template <typename T>
Var gated_add(Graph<T>& g, Var x, Var y, Var gate, std::size_t group_rows) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& yv = g.value(y);
    const Tensor<T>& gv = g.value(gate);
    const std::size_t d = xv.shape().back(), n = rows_of(xv);
    require(yv.size() == xv.size() && n % group_rows == 0 && gv.size() == (n / group_rows) * d, ErrorKind::Shape,
            "gated_add: x {} y {} gate {}", shape_str(xv.shape()), shape_str(yv.shape()), shape_str(gv.shape()));
    Tensor<T> out(xv.shape());
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t gi = (r / group_rows) * d;
        for (std::size_t c = 0; c < d; ++c) out[r * d + c] = xv[r * d + c] + gv[gi + c] * yv[r * d + c];
    }
    return g.record(std::move(out), {x, y, gate}, [x, y, gate, group_rows, d, n](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        const auto& yv = g.value(y);
        const auto& gv = g.value(gate);
        T* dx = g.needs_grad(x) ? g.grad(x).data() : nullptr;
        T* dyv = g.needs_grad(y) ? g.grad(y).data() : nullptr;
        T* dg = g.needs_grad(gate) ? g.grad(gate).data() : nullptr;
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t gi = (r / group_rows) * d;
            for (std::size_t c = 0; c < d; ++c) {
                const T v = dy[r * d + c];
                if (dx) dx[r * d + c] += v;
                if (dyv) dyv[r * d + c] += v * gv[gi + c];
                if (dg) dg[gi + c] += v * yv[r * d + c];
            }
        }
    });
}

template <typename T>
Var slice_cols(Graph<T>& g, Var x, std::size_t c0, std::size_t c1) {
    const Tensor<T>& xv = g.value(x);
    const std::size_t m = xv.shape().back(), n = rows_of(xv), w = c1 - c0;
    require(c0 < c1 && c1 <= m, ErrorKind::Shape, "slice_cols: [{}, {}) of width {}", c0, c1, m);
    Shape s = xv.shape();
    s.back() = w;
    Tensor<T> y(s);
    for (std::size_t r = 0; r < n; ++r)
        std::copy(xv.data() + r * m + c0, xv.data() + r * m + c1, y.data() + r * w);
    return g.record(std::move(y), {x}, [x, c0, m, n, w](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        auto& dx = g.grad(x);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c) dx[r * m + c0 + c] += dy[r * w + c];
    });
}

namespace {

// Per-head views into the packed [q | k | v] rows of one batch element.
template <typename T>
void head_gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_rs, std::size_t a_cs,
               const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    const kernels::GemmArgs<T> args{m, n, k, a, a_rs, a_cs, b, ldb, c, ldc, accumulate};
    if constexpr (std::is_same_v<T, float>)
        kernels::active().gemm(args);
    else
        kernels::gemm_reference(args);
}

// dst[c, j] = src[j * stride + c] for a [rows, cols] strided block.
template <typename T>
void gather_transposed(const T* src, std::size_t rows, std::size_t cols, std::size_t stride, T* dst) {
    for (std::size_t j = 0; j < rows; ++j)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + j] = src[j * stride + c];
}

}  // namespace

template <typename T>
Var attention(Graph<T>& g, Var qkv, std::size_t batch, std::size_t tokens, std::size_t heads) {
    const Tensor<T>& in = g.value(qkv);
    require(in.rank() == 2 && in.dim(0) == batch * tokens && in.dim(1) % 3 == 0 && (in.dim(1) / 3) % heads == 0,
            ErrorKind::Shape, "attention: qkv {} for batch {} tokens {} heads {}", shape_str(in.shape()), batch,
            tokens, heads);
    const std::size_t d = in.dim(1) / 3, dh = d / heads, stride = 3 * d, tt = tokens * tokens;
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    Tensor<T> out({batch * tokens, d});
    std::vector<T> probs(batch * heads * tt);
    std::vector<T> kt(dh * tokens);
    for (std::size_t b = 0; b < batch; ++b) {
        const T* base = in.data() + b * tokens * stride;
        for (std::size_t h = 0; h < heads; ++h) {
            T* p = probs.data() + (b * heads + h) * tt;
            gather_transposed(base + d + h * dh, tokens, dh, stride, kt.data());
            head_gemm<T>(tokens, tokens, dh, base + h * dh, stride, 1, kt.data(), tokens, p, tokens, false);
            for (std::size_t i = 0; i < tokens; ++i) {
                T* row = p + i * tokens;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < tokens; ++j) mx = std::max(mx, row[j] *= inv_sqrt);
                T z = 0;
                for (std::size_t j = 0; j < tokens; ++j) z += (row[j] = std::exp(row[j] - mx));
                for (std::size_t j = 0; j < tokens; ++j) row[j] /= z;
            }
            head_gemm<T>(tokens, dh, tokens, p, tokens, 1, base + 2 * d + h * dh, stride,
                         out.data() + b * tokens * d + h * dh, d, false);
        }
    }
    return g.record(std::move(out), {qkv},
                    [qkv, batch, tokens, heads, d, dh, stride, tt, inv_sqrt, probs = std::move(probs)](Graph<T>& g,
                                                                                                     int self) {
                        const auto& dout = g.grad_of(self);
                        const auto& in = g.value(qkv);
                        auto& din = g.grad(qkv);
                        std::vector<T> vt(dh * tokens), ds(tt);
                        for (std::size_t b = 0; b < batch; ++b) {
                            const T* base = in.data() + b * tokens * stride;
                            T* dbase = din.data() + b * tokens * stride;
                            const T* dob = dout.data() + b * tokens * d;
                            for (std::size_t h = 0; h < heads; ++h) {
                                const T* p = probs.data() + (b * heads + h) * tt;
                                const T* dout_h = dob + h * dh;
                                // dP = dO V^T, dV += P^T dO
                                gather_transposed(base + 2 * d + h * dh, tokens, dh, stride, vt.data());
                                head_gemm<T>(tokens, tokens, dh, dout_h, d, 1, vt.data(), tokens, ds.data(), tokens,
                                             false);
                                head_gemm<T>(tokens, dh, tokens, p, 1, tokens, dout_h, d, dbase + 2 * d + h * dh,
                                             stride, true);
                                // softmax backward, then the 1/sqrt(dh) scale
                                for (std::size_t i = 0; i < tokens; ++i) {
                                    const T* pr = p + i * tokens;
                                    T* dr = ds.data() + i * tokens;
                                    T dot = 0;
                                    for (std::size_t j = 0; j < tokens; ++j) dot += dr[j] * pr[j];
                                    for (std::size_t j = 0; j < tokens; ++j) dr[j] = pr[j] * (dr[j] - dot) * inv_sqrt;
                                }
                                // dQ += dS K, dK += dS^T Q
                                head_gemm<T>(tokens, dh, tokens, ds.data(), tokens, 1, base + d + h * dh, stride,
                                             dbase + h * dh, stride, true);
                                head_gemm<T>(tokens, dh, tokens, ds.data(), 1, tokens, base + h * dh, stride,
                                             dbase + d + h * dh, stride, true);
                            }
                        }
                    });
}

template <typename T>
Var embedding(Graph<T>& g, Var table, std::span<const std::size_t> index) {
    const Tensor<T>& tv = g.value(table);
    require(tv.rank() == 2, ErrorKind::Shape, "embedding: table must be 2-D");
    const std::size_t rows = tv.dim(0), d = tv.dim(1);
    Tensor<T> y({index.size(), d});
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] < rows, ErrorKind::Domain, "embedding: index {} out of range {}", index[i], rows);
        std::copy(tv.data() + index[i] * d, tv.data() + (index[i] + 1) * d, y.data() + i * d);
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    return g.record(std::move(y), {table}, [table, idx = std::move(idx), d](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        auto& dt = g.grad(table);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < d; ++c) dt[idx[i] * d + c] += dy[i * d + c];
    });
}

namespace {

struct ConvGeom {
    std::size_t ci, h, w, co, k, stride, pad, ho, wo;
    std::size_t patch() const { return ci * k * k; }
    std::size_t out_pixels() const { return ho * wo; }
};

// Output columns [lo, hi) whose input column ox*stride + kx - pad lies
// inside the image.
struct ColRange {
    std::size_t lo, hi;
};

ColRange valid_cols(const ConvGeom& cg, std::size_t kx) {
    const std::ptrdiff_t off = std::ptrdiff_t(kx) - std::ptrdiff_t(cg.pad), s = std::ptrdiff_t(cg.stride);
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + s - 1) / s;
    std::ptrdiff_t hi = std::ptrdiff_t(cg.w) - off <= 0 ? 0 : (std::ptrdiff_t(cg.w) - off - 1) / s + 1;
    hi = std::min<std::ptrdiff_t>(hi, std::ptrdiff_t(cg.wo));
    lo = std::min(lo, hi);
    return {std::size_t(lo), std::size_t(hi)};
}

template <typename T>
void im2col(const ConvGeom& cg, const T* img, T* cols) {
    for (std::size_t c = 0; c < cg.ci; ++c)
        for (std::size_t ky = 0; ky < cg.k; ++ky)
            for (std::size_t kx = 0; kx < cg.k; ++kx) {
                T* row = cols + ((c * cg.k + ky) * cg.k + kx) * cg.out_pixels();
                const ColRange r = valid_cols(cg, kx);
                for (std::size_t oy = 0; oy < cg.ho; ++oy) {
                    T* out = row + oy * cg.wo;
                    const std::ptrdiff_t iy = std::ptrdiff_t(oy * cg.stride + ky) - std::ptrdiff_t(cg.pad);
                    if (iy < 0 || iy >= std::ptrdiff_t(cg.h)) {
                        std::fill(out, out + cg.wo, T(0));
                        continue;
                    }
                    const T* in = img + (c * cg.h + std::size_t(iy)) * cg.w + std::ptrdiff_t(kx) - std::ptrdiff_t(cg.pad);
                    std::fill(out, out + r.lo, T(0));
                    if (cg.stride == 1)
                        std::copy(in + r.lo, in + r.hi, out + r.lo);
                    else
                        for (std::size_t ox = r.lo; ox < r.hi; ++ox) out[ox] = in[ox * cg.stride];
                    std::fill(out + r.hi, out + cg.wo, T(0));
                }
            }
}

// [rows, cols] -> [cols, rows], in cache-sized tiles.
template <typename T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst) {
    constexpr std::size_t kTile = 32;
    for (std::size_t i0 = 0; i0 < rows; i0 += kTile)
        for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
            const std::size_t i1 = std::min(rows, i0 + kTile), j1 = std::min(cols, j0 + kTile);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
        }
}

template <typename T>
void col2im(const ConvGeom& cg, const T* cols, T* img) {
    for (std::size_t c = 0; c < cg.ci; ++c)
        for (std::size_t ky = 0; ky < cg.k; ++ky)
            for (std::size_t kx = 0; kx < cg.k; ++kx) {
                const T* row = cols + ((c * cg.k + ky) * cg.k + kx) * cg.out_pixels();
                const ColRange r = valid_cols(cg, kx);
                for (std::size_t oy = 0; oy < cg.ho; ++oy) {
                    const std::ptrdiff_t iy = std::ptrdiff_t(oy * cg.stride + ky) - std::ptrdiff_t(cg.pad);
                    if (iy < 0 || iy >= std::ptrdiff_t(cg.h)) continue;
                    T* out = img + (c * cg.h + std::size_t(iy)) * cg.w + std::ptrdiff_t(kx) - std::ptrdiff_t(cg.pad);
                    const T* in = row + oy * cg.wo;
                    for (std::size_t ox = r.lo; ox < r.hi; ++ox) out[ox * cg.stride] += in[ox];
                }
            }
}

}  // namespace

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& wv = g.value(w);
    require(xv.rank() == 4 && wv.rank() == 4 && wv.dim(1) == xv.dim(1) && wv.dim(2) == wv.dim(3), ErrorKind::Shape,
            "conv2d: input {} weight {}", shape_str(xv.shape()), shape_str(wv.shape()));
    const std::size_t batch = xv.dim(0);
    ConvGeom cg{xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), stride, pad, 0, 0};
    cg.ho = (cg.h + 2 * pad - cg.k) / stride + 1;
    cg.wo = (cg.w + 2 * pad - cg.k) / stride + 1;
    Tensor<T> y({batch, cg.co, cg.ho, cg.wo});
    std::vector<T> cols(cg.patch() * cg.out_pixels());
    const std::size_t in_sz = cg.ci * cg.h * cg.w, out_sz = cg.co * cg.out_pixels();
    for (std::size_t n = 0; n < batch; ++n) {
        T* yn = y.data() + n * out_sz;
        if (b.valid()) {
            const Tensor<T>& bv = g.value(b);
            for (std::size_t c = 0; c < cg.co; ++c) std::fill(yn + c * cg.out_pixels(), yn + (c + 1) * cg.out_pixels(), bv[c]);
        }
        im2col(cg, xv.data() + n * in_sz, cols.data());
        km::matmul_nn(cg.co, cg.out_pixels(), cg.patch(), wv.data(), cols.data(), yn, b.valid());
    }
    return g.record(std::move(y), {x, w, b}, [x, w, b, cg, batch, in_sz, out_sz](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        const auto& xv = g.value(x);
        const auto& wv = g.value(w);
        std::vector<T> cols(cg.patch() * cg.out_pixels()), rows(g.needs_grad(w) ? cols.size() : 0);
        const bool gx = g.needs_grad(x), gw = g.needs_grad(w), gb = g.needs_grad(b);
        for (std::size_t n = 0; n < batch; ++n) {
            const T* dyn = dy.data() + n * out_sz;
            if (gb) {
                auto& db = g.grad(b);
                for (std::size_t c = 0; c < cg.co; ++c)
                    for (std::size_t p = 0; p < cg.out_pixels(); ++p) db[c] += dyn[c * cg.out_pixels() + p];
            }
            if (gw) {
                im2col(cg, xv.data() + n * in_sz, cols.data());
                transpose(cols.data(), cg.patch(), cg.out_pixels(), rows.data());
                km::matmul_nn(cg.co, cg.patch(), cg.out_pixels(), dyn, rows.data(), g.grad(w).data(), true);
            }
            if (gx) {
                km::matmul_tn(cg.patch(), cg.out_pixels(), cg.co, wv.data(), dyn, cols.data(), false);
                col2im(cg, cols.data(), g.grad(x).data() + n * in_sz);
            }
        }
    });
}

template <typename T>
Var upsample2x(Graph<T>& g, Var x) {
    const Tensor<T>& xv = g.value(x);
    require(xv.rank() == 4, ErrorKind::Shape, "upsample2x: expected [B,C,H,W]");
    const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Tensor<T> y({xv.dim(0), xv.dim(1), 2 * h, 2 * w});
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < 2 * h; ++i)
            for (std::size_t j = 0; j < 2 * w; ++j) y[(p * 2 * h + i) * 2 * w + j] = xv[(p * h + i / 2) * w + j / 2];
    return g.record(std::move(y), {x}, [x, planes, h, w](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        auto& dx = g.grad(x);
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t i = 0; i < 2 * h; ++i)
                for (std::size_t j = 0; j < 2 * w; ++j) dx[(p * h + i / 2) * w + j / 2] += dy[(p * 2 * h + i) * 2 * w + j];
    });
}

template <typename T>
Var slice_channels(Graph<T>& g, Var x, std::size_t c0, std::size_t c1) {
    const Tensor<T>& xv = g.value(x);
    require(xv.rank() == 4 && c0 < c1 && c1 <= xv.dim(1), ErrorKind::Shape, "slice_channels: [{}, {}) of {}", c0, c1,
            shape_str(xv.shape()));
    const std::size_t batch = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3), wc = c1 - c0;
    Tensor<T> y({batch, wc, xv.dim(2), xv.dim(3)});
    for (std::size_t n = 0; n < batch; ++n)
        std::copy(xv.data() + (n * c + c0) * plane, xv.data() + (n * c + c1) * plane, y.data() + n * wc * plane);
    return g.record(std::move(y), {x}, [x, batch, c, c0, plane, wc](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        auto& dx = g.grad(x);
        for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t i = 0; i < wc * plane; ++i) dx[(n * c + c0) * plane + i] += dy[n * wc * plane + i];
    });
}

template <typename T>
Var gaussian_sample(Graph<T>& g, Var mean, Var logvar, const Tensor<T>& noise) {
    const Tensor<T>& mv = g.value(mean);
    const Tensor<T>& lv = g.value(logvar);
    require(mv.size() == lv.size() && mv.size() == noise.size(), ErrorKind::Shape, "gaussian_sample: size mismatch");
    Tensor<T> y(mv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = mv[i] + std::exp(T(0.5) * lv[i]) * noise[i];
    return g.record(std::move(y), {mean, logvar}, [mean, logvar, noise](Graph<T>& g, int self) {
        const auto& dy = g.grad_of(self);
        if (g.needs_grad(mean)) {
            auto& d = g.grad(mean);
            for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
        }
        if (g.needs_grad(logvar)) {
            const auto& lv = g.value(logvar);
            auto& d = g.grad(logvar);
            for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * T(0.5) * std::exp(T(0.5) * lv[i]) * noise[i];
        }
    });
}

template <typename T>
Var kl_standard_normal(Graph<T>& g, Var mean, Var logvar) {
    const Tensor<T>& mv = g.value(mean);
    const Tensor<T>& lv = g.value(logvar);
    require(mv.size() == lv.size() && mv.rank() >= 1, ErrorKind::Shape, "kl_standard_normal: size mismatch");
    const T inv_batch = T(1) / T(mv.dim(0));
    T kl = 0;
    for (std::size_t i = 0; i < mv.size(); ++i) kl += mv[i] * mv[i] + std::exp(lv[i]) - T(1) - lv[i];
    Tensor<T> y({1}, T(0.5) * kl * inv_batch);
    return g.record(std::move(y), {mean, logvar}, [mean, logvar, inv_batch](Graph<T>& g, int self) {
        const T dy = g.grad_of(self)[0] * inv_batch;
        const auto& mv = g.value(mean);
        const auto& lv = g.value(logvar);
        if (g.needs_grad(mean)) {
            auto& d = g.grad(mean);
            for (std::size_t i = 0; i < mv.size(); ++i) d[i] += dy * mv[i];
        }
        if (g.needs_grad(logvar)) {
            auto& d = g.grad(logvar);
            for (std::size_t i = 0; i < lv.size(); ++i) d[i] += dy * T(0.5) * (std::exp(lv[i]) - T(1));
        }
    });
}

template <typename T>
Var mse(Graph<T>& g, Var pred, const Tensor<T>& target) {
    const Tensor<T>& pv = g.value(pred);
    require(pv.size() == target.size(), ErrorKind::Shape, "mse: {} vs {}", shape_str(pv.shape()),
            shape_str(target.shape()));
    T s = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) s += (pv[i] - target[i]) * (pv[i] - target[i]);
    const T inv_n = T(1) / T(pv.size());
    Tensor<T> y({1}, s * inv_n);
    return g.record(std::move(y), {pred}, [pred, target, inv_n](Graph<T>& g, int self) {
        const T dy = g.grad_of(self)[0];
        const auto& pv = g.value(pred);
        auto& d = g.grad(pred);
        for (std::size_t i = 0; i < pv.size(); ++i) d[i] += dy * T(2) * (pv[i] - target[i]) * inv_n;
    });
}

#define VAEREPA_INSTANTIATE(T)                                                            \
    template Var linear<T>(Graph<T>&, Var, Var, Var);                                     \
    template Var add<T>(Graph<T>&, Var, Var);                                             \
    template Var add_tiled<T>(Graph<T>&, Var, Var);                                       \
    template Var scale<T>(Graph<T>&, Var, T);                                             \
    template Var silu<T>(Graph<T>&, Var);                                                 \
    template Var gelu<T>(Graph<T>&, Var);                                                 \
    template Var layer_norm<T>(Graph<T>&, Var, T);                                        \
    template Var modulate<T>(Graph<T>&, Var, Var, Var, std::size_t);                      \
    template Var gated_add<T>(Graph<T>&, Var, Var, Var, std::size_t);                     \
    template Var slice_cols<T>(Graph<T>&, Var, std::size_t, std::size_t);                 \
    template Var attention<T>(Graph<T>&, Var, std::size_t, std::size_t, std::size_t);     \
    template Var embedding<T>(Graph<T>&, Var, std::span<const std::size_t>);              \
    template Var conv2d<T>(Graph<T>&, Var, Var, Var, std::size_t, std::size_t);           \
    template Var upsample2x<T>(Graph<T>&, Var);                                           \
    template Var slice_channels<T>(Graph<T>&, Var, std::size_t, std::size_t);             \
    template Var gaussian_sample<T>(Graph<T>&, Var, Var, const Tensor<T>&);               \
    template Var kl_standard_normal<T>(Graph<T>&, Var, Var);                              \
    template Var mse<T>(Graph<T>&, Var, const Tensor<T>&);

VAEREPA_INSTANTIATE(float)
VAEREPA_INSTANTIATE(double)

}  // namespace vaerepa::ad
