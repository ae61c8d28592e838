// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dmsr/config.hpp"
#include "dmsr/tensor.hpp"

namespace dmsr {

struct GradCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-4;
    int coords_per_tensor = 8;
    int image_size = 16;
    double lambda_freq = 0.1;
    std::uint64_t seed = 0;
    // Relative error is |a - n| / max(|a|, |n|, floor).
    double rel_floor = 1e-6;
    // Test hook applied to every analytic gradient before comparison.
    std::function<void(const std::string& name, Tensor<double>& grad)> tamper;
};

struct GradCheckEntry {
    std::string tensor;
    std::size_t index = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_err = 0;
};

struct GradCheckReport {
    double max_rel_err = 0;
    GradCheckEntry worst;
    std::size_t tensors_checked = 0;
    std::size_t coords_checked = 0;
    std::vector<GradCheckEntry> failures;  // coordinates above tolerance

    bool passed() const { return failures.empty(); }
};

// Compares analytic gradients of loss_fn(dmsr_forward(...)) in double
// precision against central differences. Output heads are randomized so every
// tensor receives gradient; normalization runs in training mode.
GradCheckReport grad_check(const ModelConfig& cfg, const GradCheckOptions& opt = {});

}  // namespace dmsr
