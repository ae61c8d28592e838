// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dmsr {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_1d() {
    std::vector<double> g(kWin);
    double s = 0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        s += g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    }
    for (double& v : g) v /= s;
    return g;
}

// Valid-mode separable filtering of an H×W plane.
std::vector<double> filter_valid(const std::vector<double>& x, int H, int W, const std::vector<double>& g) {
    const int oh = H - kWin + 1, ow = W - kWin + 1;
    std::vector<double> tmp(static_cast<std::size_t>(H) * ow);
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < ow; ++xx) {
            double acc = 0;
            for (int k = 0; k < kWin; ++k) acc += g[k] * x[static_cast<std::size_t>(y) * W + xx + k];
            tmp[static_cast<std::size_t>(y) * ow + xx] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
            double acc = 0;
            for (int k = 0; k < kWin; ++k) acc += g[k] * tmp[static_cast<std::size_t>(y + k) * ow + xx];
            out[static_cast<std::size_t>(y) * ow + xx] = acc;
        }
    return out;
}

void require_same_size(const Image& a, const Image& b, const char* what) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError(std::string(what) + ": image sizes differ (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                         ")");
    }
}

}  // namespace

std::vector<double> rgb_to_y(const Image& img) {
    std::vector<double> y(static_cast<std::size_t>(img.height) * img.width);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = img.pixels[3 * i], g = img.pixels[3 * i + 1], b = img.pixels[3 * i + 2];
        if (!(r >= 0 && r <= 1 && g >= 0 && g <= 1 && b >= 0 && b <= 1)) {
            throw std::domain_error("rgb_to_y: pixel " + std::to_string(i) + " outside [0,1]");
        }
        y[i] = (kYOffset + kYR * r + kYG * g + kYB * b) / 255.0;
    }
    return y;
}

double psnr_plane(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("psnr: plane sizes differ or are empty");
    double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double psnr_y(const Image& a, const Image& b) {
    require_same_size(a, b, "psnr_y");
    return psnr_plane(rgb_to_y(a), rgb_to_y(b));
}

std::vector<double> ssim_window() {
    const auto g = gaussian_1d();
    std::vector<double> w(kWin * kWin);
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) w[i * kWin + j] = g[i] * g[j];
    return w;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int H, int W) {
    if (H < kWin || W < kWin) throw ShapeError("ssim: image smaller than the 11x11 window");
    if (a.size() != static_cast<std::size_t>(H) * W || b.size() != a.size()) throw ShapeError("ssim: plane size mismatch");
    const auto g = gaussian_1d();
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, H, W, g), mu_b = filter_valid(b, H, W, g);
    const auto s_aa = filter_valid(aa, H, W, g), s_bb = filter_valid(bb, H, W, g), s_ab = filter_valid(ab, H, W, g);
    double acc = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
        acc += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    return acc / static_cast<double>(mu_a.size());
}

double ssim_y(const Image& a, const Image& b) {
    require_same_size(a, b, "ssim_y");
    return ssim_plane(rgb_to_y(a), rgb_to_y(b), a.height, a.width);
}

std::vector<std::int64_t> y_histogram(const Image& img, int bins) {
    if (bins < 2) throw std::invalid_argument("y_histogram: bins must be >= 2");
    std::vector<std::int64_t> counts(bins, 0);
    for (double y : rgb_to_y(img)) {
        const int b = std::min(bins - 1, static_cast<int>(std::floor(y * bins)));
        counts[std::max(0, b)] += 1;
    }
    return counts;
}

}  // namespace dmsr
