// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace dmsr {

using nlohmann::json;

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const char* section) {
    if (!j.is_object()) throw ConfigError(std::string(section) + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw ConfigError(std::string(section) + ": unknown key '" + it.key() + "'");
    }
}

template <typename V>
void read(const json& j, const char* key, V& out, const char* section) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->template get<V>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(section) + "." + key + ": " + e.what());
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (base_channels < 1) throw ConfigError("model.base_channels must be positive");
    if (blocks_per_stage.size() != 6) throw ConfigError("model.blocks_per_stage must have exactly 6 entries");
    for (int b : blocks_per_stage)
        if (b < 1) throw ConfigError("model.blocks_per_stage entries must be >= 1");
    if (fdsm_kernels.empty()) throw ConfigError("model.fdsm_kernels must not be empty");
    for (int k : fdsm_kernels)
        if (k < 1 || k % 2 == 0) throw ConfigError("model.fdsm_kernels entries must be odd and positive");
    for (std::size_t i = 0; i < mpsrm_pool_rates.size(); ++i) {
        const int r = mpsrm_pool_rates[i];
        if (r < 2 || !is_power_of_two(r)) throw ConfigError("model.mpsrm_pool_rates entries must be powers of two >= 2");
        if (i > 0 && r >= mpsrm_pool_rates[i - 1]) throw ConfigError("model.mpsrm_pool_rates must be strictly decreasing");
    }
    if (num_input_scales < 1 || num_input_scales > 3) throw ConfigError("model.num_input_scales must be 1, 2 or 3");
}

void TrainConfig::validate() const {
    if (!(lr0 > eta_min) || eta_min < 0) throw ConfigError("train: require lr0 > eta_min >= 0");
    if (warmup_epochs < 0 || warmup_epochs >= total_epochs) throw ConfigError("train: require 0 <= warmup_epochs < total_epochs");
    if (batch < 1) throw ConfigError("train.batch must be positive");
    if (patch < 16 || patch % 4 != 0) throw ConfigError("train.patch must be >= 16 and divisible by 4");
    if (lambda_freq < 0) throw ConfigError("train.lambda_freq must be non-negative");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) throw ConfigError("train: Adam betas must lie in [0,1)");
    if (adam_eps <= 0) throw ConfigError("train.adam_eps must be positive");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (tile < 16 || tile % 4 != 0) throw ConfigError("tile must be >= 16 and divisible by 4");
    if (overlap < 0 || overlap >= tile) throw ConfigError("overlap must satisfy 0 <= overlap < tile");
}

json to_json(const ModelConfig& c) {
    return json{{"base_channels", c.base_channels},
                {"blocks_per_stage", c.blocks_per_stage},
                {"fdsm_kernels", c.fdsm_kernels},
                {"fdsm_multiconv_enabled", c.fdsm_multiconv_enabled},
                {"mpsrm_pool_rates", c.mpsrm_pool_rates},
                {"spga_enabled", c.spga_enabled},
                {"spga_skip_enabled", c.spga_skip_enabled},
                {"mpsrm_tail_conv_enabled", c.mpsrm_tail_conv_enabled},
                {"fdsm_fft_enabled", c.fdsm_fft_enabled},
                {"fdsm_modulation_pw_enabled", c.fdsm_modulation_pw_enabled},
                {"num_input_scales", c.num_input_scales}};
}

json to_json(const TrainConfig& c) {
    return json{{"lr0", c.lr0},
                {"warmup_epochs", c.warmup_epochs},
                {"total_epochs", c.total_epochs},
                {"batch", c.batch},
                {"patch", c.patch},
                {"lambda_freq", c.lambda_freq},
                {"eta_min", c.eta_min},
                {"seed", c.seed},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps},
                {"augment_flips", c.augment_flips},
                {"checkpoint_every", c.checkpoint_every}};
}

json to_json(const RunConfig& c) {
    return json{{"model", to_json(c.model)}, {"train", to_json(c.train)}, {"data_root", c.data_root},
                {"out_dir", c.out_dir},      {"tile", c.tile},               {"overlap", c.overlap}};
}

ModelConfig model_config_from_json(const json& j) {
    static const char* s = "model";
    reject_unknown_keys(j, {"base_channels", "blocks_per_stage", "fdsm_kernels", "fdsm_multiconv_enabled",
                            "mpsrm_pool_rates", "spga_enabled", "spga_skip_enabled", "mpsrm_tail_conv_enabled",
                            "fdsm_fft_enabled", "fdsm_modulation_pw_enabled", "num_input_scales"},
                        s);
    ModelConfig c;
    read(j, "base_channels", c.base_channels, s);
    read(j, "blocks_per_stage", c.blocks_per_stage, s);
    read(j, "fdsm_kernels", c.fdsm_kernels, s);
    read(j, "fdsm_multiconv_enabled", c.fdsm_multiconv_enabled, s);
    read(j, "mpsrm_pool_rates", c.mpsrm_pool_rates, s);
    read(j, "spga_enabled", c.spga_enabled, s);
    read(j, "spga_skip_enabled", c.spga_skip_enabled, s);
    read(j, "mpsrm_tail_conv_enabled", c.mpsrm_tail_conv_enabled, s);
    read(j, "fdsm_fft_enabled", c.fdsm_fft_enabled, s);
    read(j, "fdsm_modulation_pw_enabled", c.fdsm_modulation_pw_enabled, s);
    read(j, "num_input_scales", c.num_input_scales, s);
    c.validate();
    return c;
}

TrainConfig train_config_from_json(const json& j) {
    static const char* s = "train";
    reject_unknown_keys(j, {"lr0", "warmup_epochs", "total_epochs", "batch", "patch", "lambda_freq", "eta_min", "seed",
                            "adam_beta1", "adam_beta2", "adam_eps", "augment_flips", "checkpoint_every"},
                        s);
    TrainConfig c;
    read(j, "lr0", c.lr0, s);
    read(j, "warmup_epochs", c.warmup_epochs, s);
    read(j, "total_epochs", c.total_epochs, s);
    read(j, "batch", c.batch, s);
    read(j, "patch", c.patch, s);
    read(j, "lambda_freq", c.lambda_freq, s);
    read(j, "eta_min", c.eta_min, s);
    read(j, "seed", c.seed, s);
    read(j, "adam_beta1", c.adam_beta1, s);
    read(j, "adam_beta2", c.adam_beta2, s);
    read(j, "adam_eps", c.adam_eps, s);
    read(j, "augment_flips", c.augment_flips, s);
    read(j, "checkpoint_every", c.checkpoint_every, s);
    c.validate();
    return c;
}

RunConfig run_config_from_json(const json& j) {
    static const char* s = "config";
    reject_unknown_keys(j, {"model", "train", "data_root", "out_dir", "tile", "overlap"}, s);
    RunConfig c;
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    read(j, "data_root", c.data_root, s);
    read(j, "out_dir", c.out_dir, s);
    read(j, "tile", c.tile, s);
    read(j, "overlap", c.overlap, s);
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return run_config_from_json(j);
}

std::string config_hash(const json& j) {
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<AblationVariant> ablation_variants(const ModelConfig& base) {
    std::vector<AblationVariant> out;
    auto add = [&](std::string name, auto&& mutate) {
        ModelConfig c = base;
        mutate(c);
        c.validate();
        out.push_back({std::move(name), c});
    };
    // MPSRM scale branches.
    add("branches:none", [](ModelConfig& c) { c.mpsrm_pool_rates = {}; });
    add("branches:x4", [](ModelConfig& c) { c.mpsrm_pool_rates = {4}; });
    add("branches:x2", [](ModelConfig& c) { c.mpsrm_pool_rates = {2}; });
    add("branches:x4+x2", [](ModelConfig& c) { c.mpsrm_pool_rates = {4, 2}; });
    // FDSM kernel sets.
    add("kernels:3", [](ModelConfig& c) { c.fdsm_kernels = {3}; });
    add("kernels:3+5", [](ModelConfig& c) { c.fdsm_kernels = {3, 5}; });
    add("kernels:3+5+7", [](ModelConfig& c) { c.fdsm_kernels = {3, 5, 7}; });
    add("kernels:3+3+3", [](ModelConfig& c) { c.fdsm_kernels = {3, 3, 3}; });
    // MPSRM parts.
    add("mpsrm:none", [](ModelConfig& c) {
        c.spga_enabled = false;
        c.spga_skip_enabled = false;
        c.mpsrm_tail_conv_enabled = false;
    });
    add("mpsrm:spga", [](ModelConfig& c) {
        c.spga_enabled = true;
        c.spga_skip_enabled = false;
        c.mpsrm_tail_conv_enabled = false;
    });
    add("mpsrm:spga+skip", [](ModelConfig& c) {
        c.spga_enabled = true;
        c.spga_skip_enabled = true;
        c.mpsrm_tail_conv_enabled = false;
    });
    add("mpsrm:spga+skip+conv", [](ModelConfig& c) {
        c.spga_enabled = true;
        c.spga_skip_enabled = true;
        c.mpsrm_tail_conv_enabled = true;
    });
    // FDSM parts.
    add("fdsm:fft+pw", [](ModelConfig& c) {
        c.fdsm_multiconv_enabled = false;
        c.fdsm_fft_enabled = true;
        c.fdsm_modulation_pw_enabled = true;
    });
    add("fdsm:multiconv", [](ModelConfig& c) {
        c.fdsm_multiconv_enabled = true;
        c.fdsm_fft_enabled = false;
        c.fdsm_modulation_pw_enabled = false;
    });
    add("fdsm:multiconv+fft", [](ModelConfig& c) {
        c.fdsm_multiconv_enabled = true;
        c.fdsm_fft_enabled = true;
        c.fdsm_modulation_pw_enabled = false;
    });
    add("fdsm:multiconv+fft+pw", [](ModelConfig& c) {
        c.fdsm_multiconv_enabled = true;
        c.fdsm_fft_enabled = true;
        c.fdsm_modulation_pw_enabled = true;
    });
    // External input scales.
    for (int s : {1, 2, 3}) {
        add("input_scales:" + std::to_string(s), [s](ModelConfig& c) { c.num_input_scales = s; });
    }
    return out;
}

}  // namespace dmsr
