// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory layout:
//   manifest.json  config, step, Adam counter, per-tensor {name, shape, dtype, offset, trainable},
//                  total byte size and FNV-1a checksum of weights.bin
//   weights.bin    little-endian float32 tensors concatenated in lexicographic name order
// Adam moments are stored as tensors named "adam.m/<param>" and "adam.v/<param>".

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "dmsr/config.hpp"
#include "dmsr/parameters.hpp"
#include "dmsr/train.hpp"

namespace dmsr {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    ModelConfig model;
    ParameterStore params;
    AdamState adam;
    std::int64_t step = 0;
};

void save_checkpoint(const std::string& dir, const ModelConfig& cfg, const ParameterStore& params,
                     const AdamState& adam, std::int64_t step);

// Throws CheckpointError on any manifest/weights inconsistency.
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace dmsr
