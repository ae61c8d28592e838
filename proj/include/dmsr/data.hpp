// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Paired rainy/clean datasets, procedural rain synthesis and pyramid samples.

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmsr/image.hpp"

namespace dmsr {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PairPath {
    std::string name;  // shared file name
    std::string rainy;
    std::string clean;
};

// Pairs root/rain/<f> with root/gt/<f>, sorted by file name. A missing root or
// missing subfolders yields an empty list; an unmatched file throws DatasetError.
std::vector<PairPath> scan_pair_dataset(const std::string& root);

struct RainParams {
    int streak_count = 200;
    double angle_deg = 0.0;  // from vertical, in [-30, 30]
    int length_px = 12;
    double intensity = 0.6;
    double blur_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const RainParams& p);
RainParams rain_params_from_json(const nlohmann::json& j);

// Random but valid rain parameters for an image of the given size.
RainParams random_rain_params(std::uint64_t seed, int height, int width);

// Streak layer in [0,1] before intensity scaling.
std::vector<double> render_streaks(int height, int width, const RainParams& p);

// clamp(clean + intensity * streaks, 0, 1); the same layer is added to all channels.
Image synth_rain(const Image& clean, const RainParams& p);

// Smooth procedural background used by the synthetic dataset writer.
Image procedural_clean_image(int height, int width, std::uint64_t seed);

struct PyramidSample {
    std::array<Image, 3> rainy;  // full, 1/2, 1/4
    std::array<Image, 3> clean;
};

PyramidSample build_pyramid(const Image& rainy, const Image& clean);

// Independent stream for sample `index` under `seed`, so sampling order does not matter.
std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index);

// Random aligned crop of size patch×patch, optional identical flips, then build_pyramid.
PyramidSample sample_patch(const Image& rainy, const Image& clean, int patch, std::mt19937_64& rng,
                           bool flips = true);

// Three float tensors per side, B×3×H×W at full, half and quarter size.
struct PyramidBatch {
    std::array<Tensor<float>, 3> rainy;
    std::array<Tensor<float>, 3> clean;
};
PyramidBatch make_batch(const std::vector<PyramidSample>& samples);

struct PairImages {
    std::string name;
    Image rainy;
    Image clean;
};
std::vector<PairImages> load_pairs(const std::vector<PairPath>& pairs);

// Writes root/rain, root/gt and root/rainparams.json with `count` pairs of size×size.
void write_synthetic_dataset(const std::string& root, int count, std::uint64_t seed, int size = 64);

// In-memory variant of the same generator.
std::vector<PairImages> make_synthetic_pairs(int count, std::uint64_t seed, int size = 64);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dmsr
