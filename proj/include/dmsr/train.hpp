// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmsr/config.hpp"
#include "dmsr/data.hpp"
#include "dmsr/loss.hpp"
#include "dmsr/parameters.hpp"

namespace dmsr {

// Linear warmup then cosine annealing to eta_min.
double lr_at(std::int64_t step, std::int64_t steps_per_epoch, const TrainConfig& tc);

struct AdamState {
    std::int64_t t = 0;
    std::map<std::string, Tensor<float>> m;
    std::map<std::string, Tensor<float>> v;

    bool operator==(const AdamState& o) const;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// One forward/backward/Adam update at learning rate `lr`. Normalization
// running statistics in `params` are updated from the batch. Throws
// NonFiniteError, naming the first non-finite tensor, without touching state.
LossReport train_step(const ModelConfig& cfg, const TrainConfig& tc, ParameterStore& params, AdamState& adam,
                      const PyramidBatch& batch, double lr);

struct TrainState {
    ParameterStore params;
    AdamState adam;
    std::int64_t step = 0;
};

std::int64_t steps_per_epoch(std::size_t dataset_size, int batch);

// Deterministic batch for global step `step`: images are visited in a
// per-epoch permutation and each gets its own patch stream.
PyramidBatch training_batch(const std::vector<PairImages>& data, const TrainConfig& tc, std::int64_t step);

struct TrainHooks {
    std::ostream* csv = nullptr;  // header is written when state.step == 0
    std::function<void(const TrainState&)> on_checkpoint;
    std::function<void(std::int64_t step, const LossReport&)> on_step;
};

// Runs from state.step until total_epochs * steps_per_epoch steps are done,
// or at most `max_steps` more steps when max_steps >= 0.
void train_loop(const ModelConfig& cfg, const TrainConfig& tc, const std::vector<PairImages>& data, TrainState& state,
                const TrainHooks& hooks, std::int64_t max_steps = -1);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, std::int64_t step, double lr, const LossReport& r);

}  // namespace dmsr
