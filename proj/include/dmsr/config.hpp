// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Architecture, training and run configuration. Every ablation variant of the
// network is expressed through ModelConfig switches.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dmsr {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
    int base_channels = 32;
    std::vector<int> blocks_per_stage = {2, 2, 2, 2, 2, 2};
    std::vector<int> fdsm_kernels = {3, 5, 7};
    // When false, every FDSM chunk runs through one shared 3x3 conv + point-wise path.
    bool fdsm_multiconv_enabled = true;
    std::vector<int> mpsrm_pool_rates = {4, 2};
    bool spga_enabled = true;
    bool spga_skip_enabled = true;
    bool mpsrm_tail_conv_enabled = true;
    bool fdsm_fft_enabled = true;
    bool fdsm_modulation_pw_enabled = true;
    int num_input_scales = 3;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
    double lr0 = 2e-4;
    int warmup_epochs = 3;
    int total_epochs = 5;
    int batch = 12;
    int patch = 64;
    double lambda_freq = 0.1;
    double eta_min = 1e-6;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool augment_flips = true;
    int checkpoint_every = 0;  // steps; 0 saves only at the end

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string data_root;
    std::string out_dir = "runs/dmsr";
    int tile = 64;
    int overlap = 16;

    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

// Missing keys keep their defaults; unknown keys and wrong types throw ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);

// 64-bit FNV-1a of the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

// Named row configurations of the published ablation tables.
struct AblationVariant {
    std::string name;
    ModelConfig config;
};
std::vector<AblationVariant> ablation_variants(const ModelConfig& base);

}  // namespace dmsr
