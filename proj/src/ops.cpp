// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dmsr::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct Geometry {
    int channels, h, w;  // image side
    int k, stride, pad;
    int oh, ow;          // patch-grid side
    int rows() const { return channels * k * k; }
    int cols() const { return oh * ow; }
};

template <typename T>
void im2col(const T* img, const Geometry& g, T* col) {
    const int cols = g.cols();
    for (int c = 0; c < g.channels; ++c) {
        const T* src = img + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.k; ++ki) {
            for (int kj = 0; kj < g.k; ++kj) {
                T* dst = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * cols;
                for (int y = 0; y < g.oh; ++y) {
                    const int iy = y * g.stride - g.pad + ki;
                    T* row = dst + y * g.ow;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(row, row + g.ow, T(0));
                        continue;
                    }
                    const T* srow = src + static_cast<std::size_t>(iy) * g.w;
                    for (int x = 0; x < g.ow; ++x) {
                        const int ix = x * g.stride - g.pad + kj;
                        row[x] = (ix >= 0 && ix < g.w) ? srow[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const Geometry& g, T* img) {
    const int cols = g.cols();
    for (int c = 0; c < g.channels; ++c) {
        T* dst = img + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.k; ++ki) {
            for (int kj = 0; kj < g.k; ++kj) {
                const T* src = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * cols;
                for (int y = 0; y < g.oh; ++y) {
                    const int iy = y * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.h) continue;
                    T* drow = dst + static_cast<std::size_t>(iy) * g.w;
                    const T* row = src + y * g.ow;
                    for (int x = 0; x < g.ow; ++x) {
                        const int ix = x * g.stride - g.pad + kj;
                        if (ix >= 0 && ix < g.w) drow[ix] += row[x];
                    }
                }
            }
        }
    }
}

template <typename T>
void require_same_shape(const Tape<T>& tape, Var a, Var b, const char* op) {
    if (tape.shape(a) != tape.shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(tape.shape(a)) + " vs " +
                         shape_str(tape.shape(b)));
    }
}

template <typename T>
void check_bias(const Tape<T>& tape, Var b, int cout, const char* op) {
    if (b.valid() && (tape.value(b).numel() != static_cast<std::size_t>(cout))) {
        throw ShapeError(std::string(op) + ": bias has " + std::to_string(tape.value(b).numel()) +
                         " elements, expected " + std::to_string(cout));
    }
}

template <typename T>
Var depthwise_conv(Tape<T>& tape, Var x, Var w, Var b, ConvSpec spec) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& wv = tape.value(w);
    const int N = xv.n(), C = xv.c(), H = xv.h(), W = xv.w();
    const int k = wv.h();
    if (wv.n() != C || wv.c() != 1) throw ShapeError("conv2d: depth-wise weight must be [C,1,k,k]");
    check_bias(tape, b, C, "conv2d");
    const int s = spec.stride, p = spec.pad;
    const int Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
    Tensor<T> out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = xv.plane(n, c);
            const T* ker = wv.data() + static_cast<std::size_t>(c) * k * k;
            T* dst = out.plane(n, c);
            const T bias = b.valid() ? tape.value(b)[c] : T(0);
            for (int y = 0; y < Ho; ++y) {
                for (int xx = 0; xx < Wo; ++xx) {
                    T acc = bias;
                    for (int ki = 0; ki < k; ++ki) {
                        const int iy = y * s - p + ki;
                        if (iy < 0 || iy >= H) continue;
                        for (int kj = 0; kj < k; ++kj) {
                            const int ix = xx * s - p + kj;
                            if (ix < 0 || ix >= W) continue;
                            acc += ker[ki * k + kj] * src[iy * W + ix];
                        }
                    }
                    dst[y * Wo + xx] = acc;
                }
            }
        }
    }
    return tape.record("depthwise_conv2d", std::move(out), {x, w, b}, [=](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& wv = t.value(w);
        Tensor<T>* gx = t.requires_grad(x) ? &t.grad(x) : nullptr;
        Tensor<T>* gw = t.requires_grad(w) ? &t.grad(w) : nullptr;
        Tensor<T>* gb = t.requires_grad(b) ? &t.grad(b) : nullptr;
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const T* src = xv.plane(n, c);
                const T* ker = wv.data() + static_cast<std::size_t>(c) * k * k;
                const T* g = gy.plane(n, c);
                for (int y = 0; y < Ho; ++y) {
                    for (int xx = 0; xx < Wo; ++xx) {
                        const T go = g[y * Wo + xx];
                        if (gb) (*gb)[c] += go;
                        for (int ki = 0; ki < k; ++ki) {
                            const int iy = y * s - p + ki;
                            if (iy < 0 || iy >= H) continue;
                            for (int kj = 0; kj < k; ++kj) {
                                const int ix = xx * s - p + kj;
                                if (ix < 0 || ix >= W) continue;
                                if (gw) (*gw)[static_cast<std::size_t>(c) * k * k + ki * k + kj] += go * src[iy * W + ix];
                                if (gx) gx->plane(n, c)[iy * W + ix] += go * ker[ki * k + kj];
                            }
                        }
                    }
                }
            }
        }
    });
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, ConvSpec spec) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& wv = tape.value(w);
    require_rank4(xv.shape(), "conv2d input");
    require_rank4(wv.shape(), "conv2d weight");
    if (spec.groups != 1) {
        if (spec.groups != xv.c()) throw ShapeError("conv2d: only dense or depth-wise grouping is supported");
        return depthwise_conv(tape, x, w, b, spec);
    }
    const int N = xv.n(), Ci = xv.c(), H = xv.h(), W = xv.w();
    const int Co = wv.n(), k = wv.h();
    if (wv.c() != Ci || wv.w() != k) {
        throw ShapeError("conv2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                         shape_str(xv.shape()));
    }
    check_bias(tape, b, Co, "conv2d");
    Geometry g{Ci, H, W, k, spec.stride, spec.pad, 0, 0};
    g.oh = (H + 2 * g.pad - k) / g.stride + 1;
    g.ow = (W + 2 * g.pad - k) / g.stride + 1;
    if (g.oh <= 0 || g.ow <= 0) throw ShapeError("conv2d: kernel larger than padded input");
    const bool pointwise = (k == 1 && g.stride == 1 && g.pad == 0);
    const int K = g.rows(), P = g.cols();

    Tensor<T> out({N, Co, g.oh, g.ow});
    AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(K) * P);
    CMapMat<T> wm(wv.data(), Co, K);
    for (int n = 0; n < N; ++n) {
        const T* colp = xv.plane(n, 0);
        if (!pointwise) {
            im2col(xv.plane(n, 0), g, col.data());
            colp = col.data();
        }
        MapMat<T> om(out.plane(n, 0), Co, P);
        om.noalias() = wm * CMapMat<T>(colp, K, P);
        if (b.valid()) {
            const Tensor<T>& bv = tape.value(b);
            for (int o = 0; o < Co; ++o) om.row(o).array() += bv[o];
        }
    }

    return tape.record("conv2d", std::move(out), {x, w, b}, [=](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        const Tensor<T>& xv = t.value(x);
        CMapMat<T> wm(t.value(w).data(), Co, K);
        const bool need_x = t.requires_grad(x);
        const bool need_w = t.requires_grad(w);
        const bool need_b = t.requires_grad(b);
        AlignedVector<T> col(pointwise ? 0 : static_cast<std::size_t>(K) * P);
        RowMat<T> dcol;
        for (int n = 0; n < N; ++n) {
            CMapMat<T> gm(gy.plane(n, 0), Co, P);
            if (need_b) {
                Tensor<T>& gb = t.grad(b);
                for (int o = 0; o < Co; ++o) gb[o] += gm.row(o).sum();
            }
            if (need_w) {
                const T* colp = xv.plane(n, 0);
                if (!pointwise) {
                    im2col(xv.plane(n, 0), g, col.data());
                    colp = col.data();
                }
                MapMat<T> gwm(t.grad(w).data(), Co, K);
                gwm.noalias() += gm * CMapMat<T>(colp, K, P).transpose();
            }
            if (need_x) {
                Tensor<T>& gx = t.grad(x);
                if (pointwise) {
                    MapMat<T> gxm(gx.plane(n, 0), K, P);
                    gxm.noalias() += wm.transpose() * gm;
                } else {
                    dcol.noalias() = wm.transpose() * gm;
                    col2im_add(dcol.data(), g, gx.plane(n, 0));
                }
            }
        }
    });
}

template <typename T>
Var conv_transpose2d(Tape<T>& tape, Var x, Var w, Var b, int stride, int pad, int output_pad) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& wv = tape.value(w);
    require_rank4(xv.shape(), "conv_transpose2d input");
    require_rank4(wv.shape(), "conv_transpose2d weight");
    const int N = xv.n(), Ci = xv.c(), H = xv.h(), W = xv.w();
    const int Co = wv.c(), k = wv.h();
    if (wv.n() != Ci || wv.w() != k) {
        throw ShapeError("conv_transpose2d: weight " + shape_str(wv.shape()) + " incompatible with input " +
                         shape_str(xv.shape()));
    }
    check_bias(tape, b, Co, "conv_transpose2d");
    const int Ho = (H - 1) * stride - 2 * pad + k + output_pad;
    const int Wo = (W - 1) * stride - 2 * pad + k + output_pad;
    // Geometry of the forward convolution this op is the adjoint of.
    const Geometry g{Co, Ho, Wo, k, stride, pad, H, W};
    const int K = g.rows(), P = g.cols();

    Tensor<T> out({N, Co, Ho, Wo});
    CMapMat<T> wm(wv.data(), Ci, K);
    RowMat<T> col;
    for (int n = 0; n < N; ++n) {
        col.noalias() = wm.transpose() * CMapMat<T>(xv.plane(n, 0), Ci, P);
        col2im_add(col.data(), g, out.plane(n, 0));
        if (b.valid()) {
            const Tensor<T>& bv = tape.value(b);
            for (int o = 0; o < Co; ++o) {
                T* pl = out.plane(n, o);
                for (int i = 0; i < Ho * Wo; ++i) pl[i] += bv[o];
            }
        }
    }

    return tape.record("conv_transpose2d", std::move(out), {x, w, b}, [=](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        const Tensor<T>& xv = t.value(x);
        CMapMat<T> wm(t.value(w).data(), Ci, K);
        AlignedVector<T> col(static_cast<std::size_t>(K) * P);
        for (int n = 0; n < N; ++n) {
            if (t.requires_grad(b)) {
                Tensor<T>& gb = t.grad(b);
                for (int o = 0; o < Co; ++o) {
                    const T* pl = gy.plane(n, o);
                    gb[o] += std::accumulate(pl, pl + Ho * Wo, T(0));
                }
            }
            im2col(gy.plane(n, 0), g, col.data());
            CMapMat<T> cm(col.data(), K, P);
            if (t.requires_grad(w)) {
                MapMat<T> gwm(t.grad(w).data(), Ci, K);
                gwm.noalias() += CMapMat<T>(xv.plane(n, 0), Ci, P) * cm.transpose();
            }
            if (t.requires_grad(x)) {
                MapMat<T> gxm(t.grad(x).plane(n, 0), Ci, P);
                gxm.noalias() += wm * cm;
            }
        }
    });
}

template <typename T>
Var avg_pool(Tape<T>& tape, Var x, int rate) {
    const Tensor<T>& xv = tape.value(x);
    require_rank4(xv.shape(), "avg_pool");
    if (rate < 1) throw ShapeError("avg_pool: rate must be positive");
    const int N = xv.n(), C = xv.c(), H = xv.h(), W = xv.w();
    const int Ho = (H + rate - 1) / rate, Wo = (W + rate - 1) / rate;
    Tensor<T> out({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = xv.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < Ho; ++y) {
                const int y1 = std::min(H, (y + 1) * rate);
                for (int xx = 0; xx < Wo; ++xx) {
                    const int x1 = std::min(W, (xx + 1) * rate);
                    T acc = 0;
                    for (int iy = y * rate; iy < y1; ++iy)
                        for (int ix = xx * rate; ix < x1; ++ix) acc += src[iy * W + ix];
                    dst[y * Wo + xx] = acc / T((y1 - y * rate) * (x1 - xx * rate));
                }
            }
        }
    }
    return tape.record("avg_pool", std::move(out), {x}, [=](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        Tensor<T>& gx = t.grad(x);
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const T* g = gy.plane(n, c);
                T* dst = gx.plane(n, c);
                for (int y = 0; y < Ho; ++y) {
                    const int y1 = std::min(H, (y + 1) * rate);
                    for (int xx = 0; xx < Wo; ++xx) {
                        const int x1 = std::min(W, (xx + 1) * rate);
                        const T v = g[y * Wo + xx] / T((y1 - y * rate) * (x1 - xx * rate));
                        for (int iy = y * rate; iy < y1; ++iy)
                            for (int ix = xx * rate; ix < x1; ++ix) dst[iy * W + ix] += v;
                    }
                }
            }
        }
    });
}

template <typename T>
Var max_pool(Tape<T>& tape, Var x, int rate) {
    const Tensor<T>& xv = tape.value(x);
    require_rank4(xv.shape(), "max_pool");
    if (rate < 1) throw ShapeError("max_pool: rate must be positive");
    const int N = xv.n(), C = xv.c(), H = xv.h(), W = xv.w();
    const int Ho = (H + rate - 1) / rate, Wo = (W + rate - 1) / rate;
    Tensor<T> out({N, C, Ho, Wo});
    std::vector<int> argmax(out.numel());
    std::size_t o = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = xv.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < Ho; ++y) {
                const int y1 = std::min(H, (y + 1) * rate);
                for (int xx = 0; xx < Wo; ++xx, ++o) {
                    const int x1 = std::min(W, (xx + 1) * rate);
                    int best = y * rate * W + xx * rate;
                    for (int iy = y * rate; iy < y1; ++iy)
                        for (int ix = xx * rate; ix < x1; ++ix)
                            if (src[iy * W + ix] > src[best]) best = iy * W + ix;
                    dst[y * Wo + xx] = src[best];
                    argmax[o] = best;
                }
            }
        }
    }
    return tape.record("max_pool", std::move(out), {x}, [=, argmax = std::move(argmax)](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        Tensor<T>& gx = t.grad(x);
        const std::size_t per_plane = static_cast<std::size_t>(Ho) * Wo;
        for (std::size_t i = 0; i < gy.numel(); ++i) {
            const std::size_t plane = i / per_plane;
            gx[plane * H * W + argmax[i]] += gy[i];
        }
    });
}

namespace {

struct LerpAxis {
    std::vector<int> i0, i1;
    std::vector<double> frac;
};

LerpAxis lerp_axis(int in, int out) {
    LerpAxis a;
    a.i0.resize(out);
    a.i1.resize(out);
    a.frac.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        int lo = std::min(static_cast<int>(src), in - 1);
        a.i0[o] = lo;
        a.i1[o] = std::min(lo + 1, in - 1);
        a.frac[o] = src - lo;
    }
    return a;
}

}  // namespace

template <typename T>
Var resize_bilinear(Tape<T>& tape, Var x, int out_h, int out_w) {
    const Tensor<T>& xv = tape.value(x);
    require_rank4(xv.shape(), "resize_bilinear");
    if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: empty output size");
    const int N = xv.n(), C = xv.c(), H = xv.h(), W = xv.w();
    if (H == out_h && W == out_w) {
        Tensor<T> copy = xv;
        return tape.record("resize_bilinear", std::move(copy), {x}, [x](Tape<T>& t, int self) {
            const Tensor<T>& gy = t.out_grad(self);
            Tensor<T>& gx = t.grad(x);
            for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
        });
    }
    const LerpAxis ay = lerp_axis(H, out_h), ax = lerp_axis(W, out_w);
    Tensor<T> out({N, C, out_h, out_w});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* src = xv.plane(n, c);
            T* dst = out.plane(n, c);
            for (int y = 0; y < out_h; ++y) {
                const T fy = T(ay.frac[y]);
                const T* r0 = src + ay.i0[y] * W;
                const T* r1 = src + ay.i1[y] * W;
                for (int xx = 0; xx < out_w; ++xx) {
                    const T fx = T(ax.frac[xx]);
                    const int c0 = ax.i0[xx], c1 = ax.i1[xx];
                    const T top = (T(1) - fx) * r0[c0] + fx * r0[c1];
                    const T bot = (T(1) - fx) * r1[c0] + fx * r1[c1];
                    dst[y * out_w + xx] = (T(1) - fy) * top + fy * bot;
                }
            }
        }
    }
    return tape.record("resize_bilinear", std::move(out), {x}, [=](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        Tensor<T>& gx = t.grad(x);
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const T* g = gy.plane(n, c);
                T* dst = gx.plane(n, c);
                for (int y = 0; y < out_h; ++y) {
                    const T fy = T(ay.frac[y]);
                    T* r0 = dst + ay.i0[y] * W;
                    T* r1 = dst + ay.i1[y] * W;
                    for (int xx = 0; xx < out_w; ++xx) {
                        const T fx = T(ax.frac[xx]);
                        const int c0 = ax.i0[xx], c1 = ax.i1[xx];
                        const T v = g[y * out_w + xx];
                        r0[c0] += (T(1) - fy) * (T(1) - fx) * v;
                        r0[c1] += (T(1) - fy) * fx * v;
                        r1[c0] += fy * (T(1) - fx) * v;
                        r1[c1] += fy * fx * v;
                    }
                }
            }
        }
    });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    require_same_shape(tape, a, b, "add");
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    return tape.record("add", std::move(out), {a, b}, [a, b](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        for (Var v : {a, b}) {
            if (!t.requires_grad(v)) continue;
            Tensor<T>& g = t.grad(v);
            for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i];
        }
    });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
    require_same_shape(tape, a, b, "sub");
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
    return tape.record("sub", std::move(out), {a, b}, [a, b](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        if (t.requires_grad(a)) {
            Tensor<T>& g = t.grad(a);
            for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i];
        }
        if (t.requires_grad(b)) {
            Tensor<T>& g = t.grad(b);
            for (std::size_t i = 0; i < gy.numel(); ++i) g[i] -= gy[i];
        }
    });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
    require_same_shape(tape, a, b, "mul");
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
    return tape.record("mul", std::move(out), {a, b}, [a, b](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        const Tensor<T>& av = t.value(a);
        const Tensor<T>& bv = t.value(b);
        if (t.requires_grad(a)) {
            Tensor<T>& g = t.grad(a);
            for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i] * bv[i];
        }
        if (t.requires_grad(b)) {
            Tensor<T>& g = t.grad(b);
            for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i] * av[i];
        }
    });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
    const Tensor<T>& xv = tape.value(x);
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
    return tape.record("sigmoid", std::move(out), {x}, [x](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        const Tensor<T>& y = t.node(self).value;
        Tensor<T>& g = t.grad(x);
        for (std::size_t i = 0; i < gy.numel(); ++i) g[i] += gy[i] * y[i] * (T(1) - y[i]);
    });
}

template <typename T>
Var gelu(Tape<T>& tape, Var x) {
    const Tensor<T>& xv = tape.value(x);
    const T inv_sqrt2 = T(0.70710678118654752440);
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
    return tape.record("gelu", std::move(out), {x}, [x, inv_sqrt2](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        const Tensor<T>& xv = t.value(x);
        Tensor<T>& g = t.grad(x);
        const T inv_sqrt2pi = T(0.39894228040143267794);
        for (std::size_t i = 0; i < gy.numel(); ++i) {
            const T v = xv[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
            g[i] += gy[i] * (cdf + v * pdf);
        }
    });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
    const Tensor<T>& xv = tape.value(x);
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
    return tape.record("relu", std::move(out), {x}, [x](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        const Tensor<T>& xv = t.value(x);
        Tensor<T>& g = t.grad(x);
        for (std::size_t i = 0; i < gy.numel(); ++i)
            if (xv[i] > T(0)) g[i] += gy[i];
    });
}

template <typename T>
Var concat_channels(Tape<T>& tape, const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape& s0 = tape.shape(xs[0]);
    require_rank4(s0, "concat_channels");
    int total = 0;
    for (Var v : xs) {
        const Shape& s = tape.shape(v);
        require_rank4(s, "concat_channels");
        if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
            throw ShapeError("concat_channels: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
        }
        total += s[1];
    }
    const int N = s0[0], H = s0[2], W = s0[3];
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor<T> out({N, total, H, W});
    for (int n = 0; n < N; ++n) {
        int off = 0;
        for (Var v : xs) {
            const Tensor<T>& xv = tape.value(v);
            std::copy(xv.plane(n, 0), xv.plane(n, 0) + xv.c() * hw, out.plane(n, off));
            off += xv.c();
        }
    }
    return tape.record("concat_channels", std::move(out), xs, [xs, N, hw](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        int off = 0;
        for (Var v : xs) {
            const int c = t.shape(v)[1];
            if (t.requires_grad(v)) {
                Tensor<T>& g = t.grad(v);
                for (int n = 0; n < N; ++n) {
                    const T* src = gy.plane(n, off);
                    T* dst = g.plane(n, 0);
                    for (std::size_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                }
            }
            off += c;
        }
    });
}

template <typename T>
Var slice_channels(Tape<T>& tape, Var x, int start, int count) {
    const Tensor<T>& xv = tape.value(x);
    require_rank4(xv.shape(), "slice_channels");
    if (start < 0 || count < 1 || start + count > xv.c()) {
        throw ShapeError("slice_channels: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + std::to_string(xv.c()) + " channels");
    }
    const int N = xv.n();
    const std::size_t hw = static_cast<std::size_t>(xv.h()) * xv.w();
    Tensor<T> out({N, count, xv.h(), xv.w()});
    for (int n = 0; n < N; ++n) std::copy(xv.plane(n, start), xv.plane(n, start) + count * hw, out.plane(n, 0));
    return tape.record("slice_channels", std::move(out), {x}, [=](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        Tensor<T>& g = t.grad(x);
        for (int n = 0; n < N; ++n) {
            const T* src = gy.plane(n, 0);
            T* dst = g.plane(n, start);
            for (std::size_t i = 0; i < count * hw; ++i) dst[i] += src[i];
        }
    });
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, bool training, const Tensor<T>* running_mean,
               const Tensor<T>* running_var, T eps, BatchStats<T>* stats) {
    const Tensor<T>& xv = tape.value(x);
    require_rank4(xv.shape(), "batch_norm");
    const int N = xv.n(), C = xv.c();
    const std::size_t hw = static_cast<std::size_t>(xv.h()) * xv.w();
    const std::size_t m = N * hw;
    if (tape.value(gamma).numel() != static_cast<std::size_t>(C) ||
        tape.value(beta).numel() != static_cast<std::size_t>(C)) {
        throw ShapeError("batch_norm: affine parameters must have " + std::to_string(C) + " elements");
    }
    std::vector<T> mean(C), var(C);
    if (training) {
        for (int c = 0; c < C; ++c) {
            T s = 0;
            for (int n = 0; n < N; ++n) {
                const T* p = xv.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) s += p[i];
            }
            mean[c] = s / T(m);
            T v = 0;
            for (int n = 0; n < N; ++n) {
                const T* p = xv.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) v += (p[i] - mean[c]) * (p[i] - mean[c]);
            }
            var[c] = v / T(m);
        }
        if (stats) {
            stats->mean = Tensor<T>({C}, mean);
            stats->var = Tensor<T>({C}, var);
            stats->count = m;
        }
    } else {
        if (!running_mean || !running_var) throw std::invalid_argument("batch_norm: evaluation needs running statistics");
        for (int c = 0; c < C; ++c) {
            mean[c] = (*running_mean)[c];
            var[c] = (*running_var)[c];
        }
    }
    std::vector<T> inv_std(C);
    for (int c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + eps);

    const Tensor<T>& gv = tape.value(gamma);
    const Tensor<T>& bv = tape.value(beta);
    Tensor<T> out(xv.shape());
    Tensor<T> xhat(xv.shape());
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* p = xv.plane(n, c);
            T* q = out.plane(n, c);
            T* h = xhat.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                h[i] = (p[i] - mean[c]) * inv_std[c];
                q[i] = gv[c] * h[i] + bv[c];
            }
        }
    }
    return tape.record("batch_norm", std::move(out), {x, gamma, beta},
                       [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        const Tensor<T>& gv = t.value(gamma);
        std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));
        for (int n = 0; n < N; ++n) {
            for (int c = 0; c < C; ++c) {
                const T* g = gy.plane(n, c);
                const T* h = xhat.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) {
                    sum_g[c] += g[i];
                    sum_gx[c] += g[i] * h[i];
                }
            }
        }
        if (t.requires_grad(beta)) {
            Tensor<T>& g = t.grad(beta);
            for (int c = 0; c < C; ++c) g[c] += sum_g[c];
        }
        if (t.requires_grad(gamma)) {
            Tensor<T>& g = t.grad(gamma);
            for (int c = 0; c < C; ++c) g[c] += sum_gx[c];
        }
        if (t.requires_grad(x)) {
            Tensor<T>& gx = t.grad(x);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < C; ++c) {
                    const T* g = gy.plane(n, c);
                    const T* h = xhat.plane(n, c);
                    T* d = gx.plane(n, c);
                    const T scale = gv[c] * inv_std[c];
                    if (training) {
                        const T mg = sum_g[c] / T(m), mgx = sum_gx[c] / T(m);
                        for (std::size_t i = 0; i < hw; ++i) d[i] += scale * (g[i] - mg - h[i] * mgx);
                    } else {
                        for (std::size_t i = 0; i < hw; ++i) d[i] += scale * g[i];
                    }
                }
            }
        }
    });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
    const Tensor<T>& xv = tape.value(x);
    long double s = 0;
    for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
    return tape.record("sum", Tensor<T>({1}, static_cast<T>(s)), {x}, [x](Tape<T>& t, int self) {
        const T gy = t.out_grad(self)[0];
        Tensor<T>& g = t.grad(x);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy;
    });
}

template <typename T>
Var mean_abs(Tape<T>& tape, Var x) {
    const Tensor<T>& xv = tape.value(x);
    if (xv.empty()) throw ShapeError("mean_abs: empty tensor");
    // Extended accumulator keeps the scalar loss smooth enough for finite differences.
    long double s = 0;
    for (std::size_t i = 0; i < xv.numel(); ++i) s += std::abs(static_cast<long double>(xv[i]));
    Tensor<T> out({1}, static_cast<T>(s / static_cast<long double>(xv.numel())));
    return tape.record("mean_abs", std::move(out), {x}, [x](Tape<T>& t, int self) {
        const T gy = t.out_grad(self)[0];
        const Tensor<T>& xv = t.value(x);
        Tensor<T>& g = t.grad(x);
        const T scale = gy / T(xv.numel());
        for (std::size_t i = 0; i < xv.numel(); ++i) {
            if (xv[i] > T(0)) g[i] += scale;
            else if (xv[i] < T(0)) g[i] -= scale;
        }
    });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, const std::vector<Var>& xs, const std::vector<T>& weights) {
    if (xs.size() != weights.size()) throw std::invalid_argument("weighted_sum: size mismatch");
    long double s = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (tape.value(xs[i]).numel() != 1) throw ShapeError("weighted_sum: inputs must be scalars");
        s += static_cast<long double>(weights[i]) * tape.value(xs[i])[0];
    }
    return tape.record("weighted_sum", Tensor<T>({1}, static_cast<T>(s)), xs, [xs, weights](Tape<T>& t, int self) {
        const T gy = t.out_grad(self)[0];
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (t.requires_grad(xs[i])) t.grad(xs[i])[0] += weights[i] * gy;
    });
}

#define DMSR_INSTANTIATE_OPS(T)                                                                        \
    template Var conv2d<T>(Tape<T>&, Var, Var, Var, ConvSpec);                                         \
    template Var conv_transpose2d<T>(Tape<T>&, Var, Var, Var, int, int, int);                          \
    template Var avg_pool<T>(Tape<T>&, Var, int);                                                      \
    template Var max_pool<T>(Tape<T>&, Var, int);                                                      \
    template Var resize_bilinear<T>(Tape<T>&, Var, int, int);                                          \
    template Var add<T>(Tape<T>&, Var, Var);                                                           \
    template Var sub<T>(Tape<T>&, Var, Var);                                                           \
    template Var mul<T>(Tape<T>&, Var, Var);                                                           \
    template Var sigmoid<T>(Tape<T>&, Var);                                                            \
    template Var gelu<T>(Tape<T>&, Var);                                                               \
    template Var relu<T>(Tape<T>&, Var);                                                               \
    template Var concat_channels<T>(Tape<T>&, const std::vector<Var>&);                                \
    template Var slice_channels<T>(Tape<T>&, Var, int, int);                                           \
    template Var batch_norm<T>(Tape<T>&, Var, Var, Var, bool, const Tensor<T>*, const Tensor<T>*, T,  \
                               BatchStats<T>*);                                                        \
    template Var sum<T>(Tape<T>&, Var);                                                                \
    template Var mean_abs<T>(Tape<T>&, Var);                                                           \
    template Var weighted_sum<T>(Tape<T>&, const std::vector<Var>&, const std::vector<T>&);

DMSR_INSTANTIATE_OPS(float)
DMSR_INSTANTIATE_OPS(double)

}  // namespace dmsr::ops
