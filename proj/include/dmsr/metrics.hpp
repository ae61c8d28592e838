// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Luminance metrics. Y uses the studio-swing BT.601 weights:
//   Y255 = 16 + 65.481 R + 128.553 G + 24.966 B,  R, G, B in [0,1]
// and is returned as Y255 / 255.

#pragma once

#include <cstdint>
#include <vector>

#include "dmsr/image.hpp"

namespace dmsr {

inline constexpr double kYOffset = 16.0;
inline constexpr double kYR = 65.481;
inline constexpr double kYG = 128.553;
inline constexpr double kYB = 24.966;

// Row-major H×W luminance. Throws std::domain_error for values outside [0,1].
std::vector<double> rgb_to_y(const Image& img);

// Peak 1.0; identical inputs return +infinity.
double psnr_y(const Image& a, const Image& b);
double psnr_plane(const std::vector<double>& a, const std::vector<double>& b);

// Single-scale SSIM, 11×11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
// dynamic range 1, averaged over valid window positions.
double ssim_y(const Image& a, const Image& b);
double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int height, int width);

// Normalized 11×11 Gaussian window weights, row-major.
std::vector<double> ssim_window();

// Uniform bins over [0,1]; the last bin includes 1.
std::vector<std::int64_t> y_histogram(const Image& img, int bins);

}  // namespace dmsr
