// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

namespace fs = std::filesystem;

namespace dmsr {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

std::set<std::string> png_names(const fs::path& dir) {
    std::set<std::string> names;
    if (!fs::is_directory(dir)) return names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") names.insert(e.path().filename().string());
    }
    return names;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Bilinear splat of `v` at (x, y).
void splat(std::vector<double>& layer, int H, int W, double x, double y, double v) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const int xs[2] = {x0, x0 + 1}, ys[2] = {y0, y0 + 1};
    const double wx[2] = {1 - fx, fx}, wy[2] = {1 - fy, fy};
    for (int j = 0; j < 2; ++j) {
        if (ys[j] < 0 || ys[j] >= H) continue;
        for (int i = 0; i < 2; ++i) {
            if (xs[i] < 0 || xs[i] >= W) continue;
            layer[static_cast<std::size_t>(ys[j]) * W + xs[i]] += v * wy[j] * wx[i];
        }
    }
}

double sample(const std::vector<double>& layer, int H, int W, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto at = [&](int yy, int xx) {
        return (yy < 0 || yy >= H || xx < 0 || xx >= W) ? 0.0 : layer[static_cast<std::size_t>(yy) * W + xx];
    };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
           fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

}  // namespace

std::vector<PairPath> scan_pair_dataset(const std::string& root) {
    const fs::path r(root);
    const auto rain = png_names(r / "rain");
    const auto gt = png_names(r / "gt");
    for (const auto& n : rain)
        if (!gt.count(n)) throw DatasetError("orphan rainy image without ground truth: rain/" + n);
    for (const auto& n : gt)
        if (!rain.count(n)) throw DatasetError("orphan ground truth without rainy image: gt/" + n);
    std::vector<PairPath> out;
    for (const auto& n : rain) out.push_back({n, (r / "rain" / n).string(), (r / "gt" / n).string()});
    return out;
}

void RainParams::validate() const {
    if (streak_count < 0) throw std::invalid_argument("rain: streak_count must be >= 0");
    if (!(angle_deg >= -30.0 && angle_deg <= 30.0)) throw std::invalid_argument("rain: angle_deg must lie in [-30, 30]");
    if (length_px < 1) throw std::invalid_argument("rain: length_px must be positive");
    if (!(intensity >= 0.0 && intensity <= 1.0)) throw std::invalid_argument("rain: intensity must lie in [0, 1]");
    if (!(blur_sigma >= 0.0)) throw std::invalid_argument("rain: blur_sigma must be >= 0");
}

json to_json(const RainParams& p) {
    return json{{"streak_count", p.streak_count}, {"angle_deg", p.angle_deg}, {"length_px", p.length_px},
                {"intensity", p.intensity},       {"blur_sigma", p.blur_sigma}, {"seed", p.seed}};
}

RainParams rain_params_from_json(const json& j) {
    RainParams p;
    p.streak_count = j.at("streak_count").get<int>();
    p.angle_deg = j.at("angle_deg").get<double>();
    p.length_px = j.at("length_px").get<int>();
    p.intensity = j.at("intensity").get<double>();
    p.blur_sigma = j.at("blur_sigma").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.validate();
    return p;
}

RainParams random_rain_params(std::uint64_t seed, int height, int width) {
    std::mt19937_64 rng(splitmix64(seed ^ 0x7261696eULL));
    const double area = static_cast<double>(height) * width;
    RainParams p;
    p.streak_count = uniform_int(rng, static_cast<int>(area / 100), static_cast<int>(area / 45));
    p.angle_deg = uniform(rng, -30.0, 30.0);
    p.length_px = uniform_int(rng, 8, 18);
    p.intensity = uniform(rng, 0.35, 0.75);
    p.blur_sigma = uniform(rng, 0.5, 1.5);
    p.seed = splitmix64(seed);
    return p;
}

std::vector<double> render_streaks(int H, int W, const RainParams& p) {
    p.validate();
    std::vector<double> layer(static_cast<std::size_t>(H) * W, 0.0);
    std::mt19937_64 rng(p.seed);
    const double a = p.angle_deg * std::numbers::pi / 180.0;
    const double dx = std::sin(a), dy = std::cos(a);
    const double L = p.length_px;
    for (int s = 0; s < p.streak_count; ++s) {
        const double cx = uniform(rng, -L / 2, W + L / 2);
        const double cy = uniform(rng, -L / 2, H + L / 2);
        const double len = uniform(rng, 0.5 * L, L);
        const double brightness = uniform(rng, 0.4, 1.0);
        const int steps = std::max(1, static_cast<int>(std::ceil(len * 2)));
        for (int k = 0; k <= steps; ++k) {
            const double t = -len / 2 + len * k / steps;
            splat(layer, H, W, cx + t * dx, cy + t * dy, brightness * 0.5);
        }
    }
    for (double& v : layer) v = std::min(v, 1.0);
    if (p.blur_sigma <= 0) return layer;

    // Gaussian motion blur along the streak direction.
    const int radius = static_cast<int>(std::ceil(3 * p.blur_sigma));
    std::vector<double> w(2 * radius + 1);
    double wsum = 0;
    for (int t = -radius; t <= radius; ++t) wsum += w[t + radius] = std::exp(-0.5 * t * t / (p.blur_sigma * p.blur_sigma));
    for (double& v : w) v /= wsum;
    std::vector<double> out(layer.size(), 0.0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double acc = 0;
            for (int t = -radius; t <= radius; ++t) acc += w[t + radius] * sample(layer, H, W, x + t * dx, y + t * dy);
            out[static_cast<std::size_t>(y) * W + x] = std::clamp(acc, 0.0, 1.0);
        }
    }
    return out;
}

Image synth_rain(const Image& clean, const RainParams& p) {
    const auto layer = render_streaks(clean.height, clean.width, p);
    Image out = clean;
    for (int y = 0; y < clean.height; ++y)
        for (int x = 0; x < clean.width; ++x) {
            const double s = p.intensity * layer[static_cast<std::size_t>(y) * clean.width + x];
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = std::clamp(clean.at(y, x, c) + s, 0.0, 1.0);
        }
    return out;
}

Image procedural_clean_image(int H, int W, std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed ^ 0x636c65616eULL));
    Image img(H, W);
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = uniform(rng, 0.2, 0.6);
        gx[c] = uniform(rng, -0.15, 0.15);
        gy[c] = uniform(rng, -0.15, 0.15);
    }
    struct Wave { double fx, fy, phase, amp[3]; };
    std::vector<Wave> waves(3);
    for (auto& wv : waves) {
        wv.fx = uniform(rng, -3.0, 3.0) * 2 * std::numbers::pi / W;
        wv.fy = uniform(rng, -3.0, 3.0) * 2 * std::numbers::pi / H;
        wv.phase = uniform(rng, 0, 2 * std::numbers::pi);
        for (double& a : wv.amp) a = uniform(rng, 0.0, 0.06);
    }
    struct Blob { double cx, cy, r, col[3]; };
    std::vector<Blob> blobs(uniform_int(rng, 2, 5));
    for (auto& b : blobs) {
        b.cx = uniform(rng, 0, W);
        b.cy = uniform(rng, 0, H);
        b.r = uniform(rng, 0.08, 0.3) * std::min(H, W);
        for (double& c : b.col) c = uniform(rng, -0.2, 0.2);
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double u = static_cast<double>(x) / W - 0.5, v = static_cast<double>(y) / H - 0.5;
            for (int c = 0; c < 3; ++c) {
                double val = base[c] + gx[c] * u + gy[c] * v;
                for (const auto& wv : waves) val += wv.amp[c] * std::sin(wv.fx * x + wv.fy * y + wv.phase);
                for (const auto& b : blobs) {
                    const double d = std::hypot(x - b.cx, y - b.cy) / b.r;
                    val += b.col[c] / (1 + std::exp(8 * (d - 1)));
                }
                img.at(y, x, c) = std::clamp(val, 0.0, 0.85);
            }
        }
    }
    return img;
}

PyramidSample build_pyramid(const Image& rainy, const Image& clean) {
    if (rainy.height != clean.height || rainy.width != clean.width) {
        throw ShapeError("build_pyramid: rainy and clean images differ in size");
    }
    const int H = rainy.height, W = rainy.width;
    if (H % 4 != 0 || W % 4 != 0) {
        throw ShapeError("build_pyramid: size " + std::to_string(H) + "x" + std::to_string(W) +
                         " is not divisible by 4");
    }
    PyramidSample s;
    s.rainy[0] = rainy;
    s.clean[0] = clean;
    for (int k = 1; k < 3; ++k) {
        s.rainy[k] = resize_bilinear(rainy, H >> k, W >> k);
        s.clean[k] = resize_bilinear(clean, H >> k, W >> k);
    }
    return s;
}

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ index));
}

PyramidSample sample_patch(const Image& rainy, const Image& clean, int patch, std::mt19937_64& rng, bool flips) {
    if (patch % 4 != 0 || patch < 4) throw ShapeError("sample_patch: patch must be a positive multiple of 4");
    if (patch > rainy.height || patch > rainy.width) {
        throw ShapeError("sample_patch: patch " + std::to_string(patch) + " exceeds image " +
                         std::to_string(rainy.height) + "x" + std::to_string(rainy.width));
    }
    if (rainy.height != clean.height || rainy.width != clean.width) {
        throw ShapeError("sample_patch: rainy and clean images differ in size");
    }
    const int y0 = uniform_int(rng, 0, rainy.height - patch);
    const int x0 = uniform_int(rng, 0, rainy.width - patch);
    Image r = crop(rainy, y0, x0, patch, patch);
    Image c = crop(clean, y0, x0, patch, patch);
    if (flips) {
        std::bernoulli_distribution coin(0.5);
        if (coin(rng)) {
            r = flip_horizontal(r);
            c = flip_horizontal(c);
        }
        if (coin(rng)) {
            r = flip_vertical(r);
            c = flip_vertical(c);
        }
    }
    return build_pyramid(r, c);
}

PyramidBatch make_batch(const std::vector<PyramidSample>& samples) {
    PyramidBatch b;
    for (int k = 0; k < 3; ++k) {
        std::vector<const Image*> r, c;
        for (const auto& s : samples) {
            r.push_back(&s.rainy[k]);
            c.push_back(&s.clean[k]);
        }
        b.rainy[k] = images_to_tensor<float>(r);
        b.clean[k] = images_to_tensor<float>(c);
    }
    return b;
}

std::vector<PairImages> load_pairs(const std::vector<PairPath>& pairs) {
    std::vector<PairImages> out;
    for (const auto& p : pairs) {
        PairImages im{p.name, load_png(p.rainy), load_png(p.clean)};
        if (im.rainy.height != im.clean.height || im.rainy.width != im.clean.width) {
            throw DatasetError("pair " + p.name + ": rainy and clean images differ in size");
        }
        out.push_back(std::move(im));
    }
    return out;
}

namespace {

std::string pair_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05d.png", i);
    return buf;
}

}  // namespace

std::vector<PairImages> make_synthetic_pairs(int count, std::uint64_t seed, int size) {
    std::vector<PairImages> out;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s = splitmix64(seed + static_cast<std::uint64_t>(i));
        Image clean = procedural_clean_image(size, size, s);
        Image rainy = synth_rain(clean, random_rain_params(s, size, size));
        out.push_back({pair_name(i), std::move(rainy), std::move(clean)});
    }
    return out;
}

void write_synthetic_dataset(const std::string& root, int count, std::uint64_t seed, int size) {
    if (count < 0) throw std::invalid_argument("synthetic dataset count must be >= 0");
    if (size < 16 || size % 4 != 0) throw std::invalid_argument("synthetic image size must be >= 16 and divisible by 4");
    const fs::path r(root);
    fs::create_directories(r / "rain");
    fs::create_directories(r / "gt");
    json params = json::array();
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s = splitmix64(seed + static_cast<std::uint64_t>(i));
        const RainParams rp = random_rain_params(s, size, size);
        Image clean = procedural_clean_image(size, size, s);
        Image rainy = synth_rain(clean, rp);
        const std::string name = pair_name(i);
        save_png((r / "gt" / name).string(), clean);
        save_png((r / "rain" / name).string(), rainy);
        params.push_back(json{{"name", name}, {"params", to_json(rp)}});
    }
    std::ofstream out(r / "rainparams.json");
    out << json{{"seed", seed}, {"count", count}, {"size", size}, {"images", params}}.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write " + (r / "rainparams.json").string());
}

}  // namespace dmsr
