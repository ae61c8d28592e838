// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/spectral.hpp"

#include <Eigen/Core>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "dmsr/ops.hpp"

namespace dmsr {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Full complex DFT along an axis of length n: cos/sin tables (symmetric).
template <typename T>
struct FullBasis {
    RowMat<T> cos, sin;
};

// Real-input DFT along an axis of length n with half = n/2+1 output bins.
template <typename T>
struct HalfBasis {
    RowMat<T> cos, sin;          // n × half, forward
    RowMat<T> inv_cos, inv_sin;  // half × n, inverse incl. hermitian weights and 1/n
};

double twiddle_angle(long a, long b, long n) {
    return 2.0 * std::numbers::pi * static_cast<double>((a * b) % n) / static_cast<double>(n);
}

template <typename T>
std::shared_ptr<const FullBasis<T>> full_basis(int n) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const FullBasis<T>>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[n];
    if (!slot) {
        auto b = std::make_shared<FullBasis<T>>();
        b->cos.resize(n, n);
        b->sin.resize(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double a = twiddle_angle(i, j, n);
                b->cos(i, j) = T(std::cos(a));
                b->sin(i, j) = T(std::sin(a));
            }
        }
        slot = b;
    }
    return slot;
}

template <typename T>
std::shared_ptr<const HalfBasis<T>> half_basis(int n) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const HalfBasis<T>>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[n];
    if (!slot) {
        const int half = n / 2 + 1;
        auto b = std::make_shared<HalfBasis<T>>();
        b->cos.resize(n, half);
        b->sin.resize(n, half);
        b->inv_cos.resize(half, n);
        b->inv_sin.resize(half, n);
        for (int k = 0; k < half; ++k) {
            const bool self_conjugate = (k == 0) || (n % 2 == 0 && k == n / 2);
            const double weight = (self_conjugate ? 1.0 : 2.0) / n;
            for (int i = 0; i < n; ++i) {
                const double a = twiddle_angle(i, k, n);
                b->cos(i, k) = T(std::cos(a));
                b->sin(i, k) = T(std::sin(a));
                b->inv_cos(k, i) = T(weight * std::cos(a));
                b->inv_sin(k, i) = T(weight * std::sin(a));
            }
        }
        slot = b;
    }
    return slot;
}

// x: planes×H×W (contiguous). Writes real/imag planes of H×half into the
// given destinations, indexed by plane.
template <typename T>
void forward_planes(const T* x, int planes, int H, int W, T* const* real_dst, T* const* imag_dst) {
    const auto fb = full_basis<T>(H);
    const auto hb = half_basis<T>(W);
    const int half = W / 2 + 1;
    CMapMat<T> xm(x, static_cast<Eigen::Index>(planes) * H, W);
    RowMat<T> a = xm * hb->cos;
    RowMat<T> b = -(xm * hb->sin);
    for (int p = 0; p < planes; ++p) {
        CMapMat<T> ap(a.data() + static_cast<std::size_t>(p) * H * half, H, half);
        CMapMat<T> bp(b.data() + static_cast<std::size_t>(p) * H * half, H, half);
        MapMat<T> r(real_dst[p], H, half);
        MapMat<T> im(imag_dst[p], H, half);
        r.noalias() = fb->cos * ap;
        r.noalias() += fb->sin * bp;
        im.noalias() = fb->cos * bp;
        im.noalias() -= fb->sin * ap;
    }
}

// Adjoint of forward_planes: accumulates into gx.
template <typename T>
void forward_planes_adjoint(const T* const* g_real, const T* const* g_imag, int planes, int H, int W, T* gx) {
    const auto fb = full_basis<T>(H);
    const auto hb = half_basis<T>(W);
    const int half = W / 2 + 1;
    RowMat<T> da(static_cast<Eigen::Index>(planes) * H, half), db(static_cast<Eigen::Index>(planes) * H, half);
    for (int p = 0; p < planes; ++p) {
        CMapMat<T> gr(g_real[p], H, half);
        CMapMat<T> gi(g_imag[p], H, half);
        MapMat<T> dap(da.data() + static_cast<std::size_t>(p) * H * half, H, half);
        MapMat<T> dbp(db.data() + static_cast<std::size_t>(p) * H * half, H, half);
        dap.noalias() = fb->cos * gr;
        dap.noalias() -= fb->sin * gi;
        dbp.noalias() = fb->sin * gr;
        dbp.noalias() += fb->cos * gi;
    }
    MapMat<T> gxm(gx, static_cast<Eigen::Index>(planes) * H, W);
    gxm.noalias() += da * hb->cos.transpose();
    gxm.noalias() -= db * hb->sin.transpose();
}

template <typename T>
void inverse_planes(const T* const* real, const T* const* imag, int planes, int H, int W, T* x) {
    const auto fb = full_basis<T>(H);
    const auto hb = half_basis<T>(W);
    const int half = W / 2 + 1;
    const T inv_h = T(1) / T(H);
    RowMat<T> yr(static_cast<Eigen::Index>(planes) * H, half), yi(static_cast<Eigen::Index>(planes) * H, half);
    for (int p = 0; p < planes; ++p) {
        CMapMat<T> r(real[p], H, half);
        CMapMat<T> im(imag[p], H, half);
        MapMat<T> yrp(yr.data() + static_cast<std::size_t>(p) * H * half, H, half);
        MapMat<T> yip(yi.data() + static_cast<std::size_t>(p) * H * half, H, half);
        yrp.noalias() = fb->cos * r;
        yrp.noalias() -= fb->sin * im;
        yip.noalias() = fb->cos * im;
        yip.noalias() += fb->sin * r;
    }
    yr *= inv_h;
    yi *= inv_h;
    MapMat<T> xm(x, static_cast<Eigen::Index>(planes) * H, W);
    xm.noalias() = yr * hb->inv_cos;
    xm.noalias() -= yi * hb->inv_sin;
}

template <typename T>
void inverse_planes_adjoint(const T* gx, int planes, int H, int W, T* const* g_real, T* const* g_imag) {
    const auto fb = full_basis<T>(H);
    const auto hb = half_basis<T>(W);
    const int half = W / 2 + 1;
    const T inv_h = T(1) / T(H);
    CMapMat<T> gxm(gx, static_cast<Eigen::Index>(planes) * H, W);
    RowMat<T> dyr = gxm * hb->inv_cos.transpose();
    RowMat<T> dyi = -(gxm * hb->inv_sin.transpose());
    dyr *= inv_h;
    dyi *= inv_h;
    for (int p = 0; p < planes; ++p) {
        CMapMat<T> r(dyr.data() + static_cast<std::size_t>(p) * H * half, H, half);
        CMapMat<T> i(dyi.data() + static_cast<std::size_t>(p) * H * half, H, half);
        MapMat<T> gr(g_real[p], H, half);
        MapMat<T> gi(g_imag[p], H, half);
        gr.noalias() += fb->cos * r;
        gr.noalias() += fb->sin * i;
        gi.noalias() += fb->cos * i;
        gi.noalias() -= fb->sin * r;
    }
}

// Plane pointer tables for a stacked N×2C×H×half spectrum tensor.
template <typename P, typename Tens>
void stacked_planes(Tens& spec, int N, int C, std::vector<P>& re, std::vector<P>& im) {
    re.resize(static_cast<std::size_t>(N) * C);
    im.resize(static_cast<std::size_t>(N) * C);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            re[n * C + c] = spec.plane(n, c);
            im[n * C + c] = spec.plane(n, C + c);
        }
    }
}

template <typename T>
Tensor<T> rfft2_stacked_value(const Tensor<T>& x) {
    require_rank4(x.shape(), "rfft2");
    const int N = x.n(), C = x.c(), H = x.h(), W = x.w();
    Tensor<T> out({N, 2 * C, H, W / 2 + 1});
    std::vector<T*> re, im;
    stacked_planes<T*>(out, N, C, re, im);
    forward_planes(x.data(), N * C, H, W, re.data(), im.data());
    return out;
}

template <typename T>
Tensor<T> irfft2_stacked_value(const Tensor<T>& spec, int width) {
    require_rank4(spec.shape(), "irfft2");
    if (spec.c() % 2 != 0) throw ShapeError("irfft2: stacked spectrum needs an even channel count");
    if (spec.w() != width / 2 + 1) {
        throw ShapeError("irfft2: spectrum width " + std::to_string(spec.w()) + " does not match signal width " +
                         std::to_string(width));
    }
    const int N = spec.n(), C = spec.c() / 2, H = spec.h();
    Tensor<T> out({N, C, H, width});
    std::vector<const T*> re, im;
    stacked_planes<const T*>(spec, N, C, re, im);
    inverse_planes(re.data(), im.data(), N * C, H, width, out.data());
    return out;
}

template <typename T>
Var record_rfft2(Tape<T>& tape, Var x) {
    const Tensor<T>& xv = tape.value(x);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
        if (!std::isfinite(xv[i])) throw std::domain_error("rfft2: non-finite input");
    }
    Tensor<T> out = rfft2_stacked_value(xv);
    const int N = xv.n(), C = xv.c(), H = xv.h(), W = xv.w();
    return tape.record("rfft2", std::move(out), {x}, [=](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        std::vector<const T*> re, im;
        stacked_planes<const T*>(gy, N, C, re, im);
        forward_planes_adjoint(re.data(), im.data(), N * C, H, W, t.grad(x).data());
    });
}

template <typename T>
Var record_irfft2(Tape<T>& tape, Var spec, int width) {
    const Tensor<T>& sv = tape.value(spec);
    for (std::size_t i = 0; i < sv.numel(); ++i) {
        if (!std::isfinite(sv[i])) throw std::domain_error("irfft2: non-finite spectrum");
    }
    Tensor<T> out = irfft2_stacked_value(sv, width);
    const int N = sv.n(), C = sv.c() / 2, H = sv.h();
    return tape.record("irfft2", std::move(out), {spec}, [=](Tape<T>& t, int self) {
        const Tensor<T>& gy = t.out_grad(self);
        Tensor<T>& gs = t.grad(spec);
        std::vector<T*> re, im;
        stacked_planes<T*>(gs, N, C, re, im);
        inverse_planes_adjoint(gy.data(), N * C, H, width, re.data(), im.data());
    });
}

}  // namespace

namespace ops {

template <typename T>
Var rfft2_stacked(Tape<T>& tape, Var x) {
    return record_rfft2(tape, x);
}

template <typename T>
Var irfft2_stacked(Tape<T>& tape, Var spectrum, int width) {
    return record_irfft2(tape, spectrum, width);
}

template <typename T>
SpectralPair rfft2(Tape<T>& tape, Var x) {
    const int C = tape.shape(x)[1];
    Var stacked = record_rfft2(tape, x);
    return {slice_channels(tape, stacked, 0, C), slice_channels(tape, stacked, C, C)};
}

template <typename T>
Var irfft2(Tape<T>& tape, const SpectralPair& spectrum, int width) {
    if (tape.shape(spectrum.real) != tape.shape(spectrum.imag)) {
        throw ShapeError("irfft2: real and imaginary parts differ in shape");
    }
    return record_irfft2(tape, concat_channels(tape, {spectrum.real, spectrum.imag}), width);
}

template SpectralPair rfft2<float>(Tape<float>&, Var);
template SpectralPair rfft2<double>(Tape<double>&, Var);
template Var irfft2<float>(Tape<float>&, const SpectralPair&, int);
template Var irfft2<double>(Tape<double>&, const SpectralPair&, int);
template Var rfft2_stacked<float>(Tape<float>&, Var);
template Var rfft2_stacked<double>(Tape<double>&, Var);
template Var irfft2_stacked<float>(Tape<float>&, Var, int);
template Var irfft2_stacked<double>(Tape<double>&, Var, int);

}  // namespace ops

template <typename T>
void rfft2(const Tensor<T>& x, Tensor<T>& real, Tensor<T>& imag) {
    Tensor<T> stacked = rfft2_stacked_value(x);
    const int N = x.n(), C = x.c(), H = x.h(), F = x.w() / 2 + 1;
    real = Tensor<T>({N, C, H, F});
    imag = Tensor<T>({N, C, H, F});
    const std::size_t plane = static_cast<std::size_t>(H) * F;
    for (int n = 0; n < N; ++n) {
        std::copy(stacked.plane(n, 0), stacked.plane(n, 0) + C * plane, real.plane(n, 0));
        std::copy(stacked.plane(n, C), stacked.plane(n, C) + C * plane, imag.plane(n, 0));
    }
}

template <typename T>
Tensor<T> irfft2(const Tensor<T>& real, const Tensor<T>& imag, int width) {
    if (real.shape() != imag.shape()) throw ShapeError("irfft2: real and imaginary parts differ in shape");
    const int N = real.n(), C = real.c(), H = real.h(), F = real.w();
    Tensor<T> stacked({N, 2 * C, H, F});
    const std::size_t plane = static_cast<std::size_t>(H) * F;
    for (int n = 0; n < N; ++n) {
        std::copy(real.plane(n, 0), real.plane(n, 0) + C * plane, stacked.plane(n, 0));
        std::copy(imag.plane(n, 0), imag.plane(n, 0) + C * plane, stacked.plane(n, C));
    }
    return irfft2_stacked_value(stacked, width);
}

template void rfft2<float>(const Tensor<float>&, Tensor<float>&, Tensor<float>&);
template void rfft2<double>(const Tensor<double>&, Tensor<double>&, Tensor<double>&);
template Tensor<float> irfft2<float>(const Tensor<float>&, const Tensor<float>&, int);
template Tensor<double> irfft2<double>(const Tensor<double>&, const Tensor<double>&, int);

}  // namespace dmsr
