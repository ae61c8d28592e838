// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-scale L1 plus frequency-domain L1 on the stacked real/imaginary
// half-spectrum of (out - gt).

#pragma once

#include <array>

#include "dmsr/autograd.hpp"

namespace dmsr {

struct LossReport {
    double total = 0;
    std::array<double, 3> per_scale_l1{};
    std::array<double, 3> per_scale_freq{};
};

template <typename T>
struct LossGraph {
    Var total;
    std::array<Var, 3> l1;
    std::array<Var, 3> freq;
};

// Records the loss on `tape`. Scales are ordered full, half, quarter.
template <typename T>
LossGraph<T> loss_graph(Tape<T>& tape, const std::array<Var, 3>& outs, const std::array<Var, 3>& gts,
                        double lambda_freq);

// Reads the recorded terms; `total` is recomputed in double from the terms.
template <typename T>
LossReport loss_report(const Tape<T>& tape, const LossGraph<T>& g, double lambda_freq);

// Non-differentiable evaluation on plain tensors.
template <typename T>
LossReport loss_fn(const std::array<Tensor<T>, 3>& outs, const std::array<Tensor<T>, 3>& gts, double lambda_freq);

}  // namespace dmsr
