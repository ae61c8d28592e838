// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmsr/config.hpp"
#include "dmsr/image.hpp"
#include "dmsr/parameters.hpp"

namespace dmsr {

// Full-resolution output of one evaluation-mode forward pass over an image
// whose sides are divisible by 4. Not clamped.
Image forward_image(const ParameterStore& params, const ModelConfig& cfg, const Image& img);

// Tiles of size tile×tile at stride tile - overlap over a reflect-padded
// copy, each run with its own pyramid, blended by uniform averaging, then
// cropped and clamped to [0,1].
Image sliding_window_infer(const ParameterStore& params, const ModelConfig& cfg, const Image& img, int tile,
                           int overlap);

// Same tiling with an arbitrary per-tile model.
Image sliding_window_apply(const std::function<Image(const Image&)>& model, const Image& img, int tile, int overlap);

struct EvalEntry {
    std::string name;
    double psnr_db = 0;
    double ssim = 0;
};

struct EvalReport {
    std::string dataset;
    std::string config_hash;
    std::vector<EvalEntry> per_image;
    double mean_psnr_db = 0;  // +inf if any image is identical to its target
    double mean_ssim = 0;
};

// Non-finite PSNR values are written as the string "inf"; means of an empty report are null.
nlohmann::json to_json(const EvalReport& r);

// Runs `model` on every rainy image of the paired dataset at `root`, scores
// against the ground truth and, when out_dir is non-empty, writes
// out_dir/<dataset>/<name> PNGs and out_dir/<dataset>/report.json.
EvalReport evaluate_dataset(const std::function<Image(const Image&)>& model, const std::string& root,
                            const std::string& out_dir, const std::string& config_hash);

EvalReport evaluate_dataset(const ParameterStore& params, const ModelConfig& cfg, const std::string& root, int tile,
                            int overlap, const std::string& out_dir, const std::string& config_hash);

}  // namespace dmsr
