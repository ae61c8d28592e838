// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>

#include "dmsr/ops.hpp"

namespace dmsr {

Image load_png(const std::string& path) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw std::runtime_error("cannot read PNG " + path + ": " + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw std::runtime_error("cannot decode PNG " + path + ": " + msg);
    }
    Image img(static_cast<int>(png.height), static_cast<int>(png.width));
    for (std::size_t i = 0; i < buf.size(); ++i) img.pixels[i] = buf[i] / 255.0;
    return img;
}

void save_png(const std::string& path, const Image& img) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(img.pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        buf[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
    }
    if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw std::runtime_error("cannot write PNG " + path + ": " + png.message);
    }
}

Image clamp01(Image img) {
    for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
    return img;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images) {
    if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
    const int H = images[0]->height, W = images[0]->width;
    Tensor<T> out({static_cast<int>(images.size()), 3, H, W});
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = *images[n];
        if (img.height != H || img.width != W) throw ShapeError("images_to_tensor: images differ in size");
        for (int c = 0; c < 3; ++c) {
            T* dst = out.plane(static_cast<int>(n), c);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) dst[y * W + x] = static_cast<T>(img.at(y, x, c));
        }
    }
    return out;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int index) {
    require_rank4(t.shape(), "tensor_to_image");
    if (t.c() != 3) throw ShapeError("tensor_to_image: expected 3 channels, got " + shape_str(t.shape()));
    Image img(t.h(), t.w());
    for (int c = 0; c < 3; ++c) {
        const T* src = t.plane(index, c);
        for (int y = 0; y < t.h(); ++y)
            for (int x = 0; x < t.w(); ++x) img.at(y, x, c) = static_cast<double>(src[y * t.w() + x]);
    }
    return img;
}

template Tensor<float> images_to_tensor<float>(const std::vector<const Image*>&);
template Tensor<double> images_to_tensor<double>(const std::vector<const Image*>&);
template Image tensor_to_image<float>(const Tensor<float>&, int);
template Image tensor_to_image<double>(const Tensor<double>&, int);

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    Tape<double> tape(false);
    Var x = tape.constant(image_to_tensor<double>(img));
    return tensor_to_image(tape.value(ops::resize_bilinear(tape, x, out_h, out_w)));
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width) {
        throw ShapeError("crop window exceeds image bounds");
    }
    Image out(h, w);
    for (int y = 0; y < h; ++y) {
        const double* src = &img.pixels[(static_cast<std::size_t>(y0 + y) * img.width + x0) * 3];
        std::copy(src, src + static_cast<std::size_t>(w) * 3, &out.pixels[static_cast<std::size_t>(y) * w * 3]);
    }
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

Image flip_vertical(const Image& img) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(img.height - 1 - y, x, c);
    return out;
}

}  // namespace dmsr
