// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "dmsr/tensor.hpp"

namespace dmsr {

// H×W×3 interleaved sRGB in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w, double fill = 0.0) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

    double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    bool operator==(const Image&) const = default;
};

// 8-bit PNG; grey and alpha inputs are converted to RGB. Values decode as v/255.
Image load_png(const std::string& path);
// Quantizes with round(v*255) after clamping to [0,1].
void save_png(const std::string& path, const Image& img);

Image clamp01(Image img);

// Stacks images (all the same size) into a B×3×H×W tensor.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images);
template <typename T>
Tensor<T> image_to_tensor(const Image& img) { return images_to_tensor<T>({&img}); }
template <typename T>
Image tensor_to_image(const Tensor<T>& t, int index = 0);

// Bilinear resampling with half-pixel centres.
Image resize_bilinear(const Image& img, int out_h, int out_w);

Image crop(const Image& img, int y0, int x0, int h, int w);
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);

}  // namespace dmsr
