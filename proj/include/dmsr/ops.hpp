// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops recorded on a Tape. All feature maps are NCHW.
// Instantiated for float (training, inference) and double (gradient checks).

#pragma once

#include <vector>

#include "dmsr/autograd.hpp"

namespace dmsr::ops {

struct ConvSpec {
    int stride = 1;
    int pad = 0;
    int groups = 1;  // 1 (dense) or in_channels (depth-wise)
};

// Zero-padded cross-correlation. w: [Cout, Cin/groups, k, k], b: [Cout] or invalid Var.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, ConvSpec spec);

// Adjoint of conv2d. w: [Cin, Cout, k, k], b: [Cout] or invalid Var.
// Output size (H-1)*stride - 2*pad + k + output_pad.
template <typename T>
Var conv_transpose2d(Tape<T>& tape, Var x, Var w, Var b, int stride, int pad, int output_pad);

// Non-overlapping pooling with kernel = stride = rate. Trailing partial
// windows are kept (ceil mode); averages divide by the valid element count.
template <typename T>
Var avg_pool(Tape<T>& tape, Var x, int rate);
template <typename T>
Var max_pool(Tape<T>& tape, Var x, int rate);

// Bilinear resampling with half-pixel centers (align_corners = false).
template <typename T>
Var resize_bilinear(Tape<T>& tape, Var x, int out_h, int out_w);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);
template <typename T>
Var sub(Tape<T>& tape, Var a, Var b);
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var sigmoid(Tape<T>& tape, Var x);
template <typename T>
Var gelu(Tape<T>& tape, Var x);  // exact (erf) form
template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var concat_channels(Tape<T>& tape, const std::vector<Var>& xs);
template <typename T>
Var slice_channels(Tape<T>& tape, Var x, int start, int count);

template <typename T>
struct BatchStats {
    Tensor<T> mean;      // [C]
    Tensor<T> var;       // [C], biased
    std::size_t count = 0;  // elements per channel
};

// Training mode normalizes with batch statistics (reported through `stats`
// when non-null); evaluation mode uses the supplied running statistics.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, bool training,
               const Tensor<T>* running_mean, const Tensor<T>* running_var, T eps,
               BatchStats<T>* stats);

// Scalar sum of all elements.
template <typename T>
Var sum(Tape<T>& tape, Var x);

// Scalar mean of |x|.
template <typename T>
Var mean_abs(Tape<T>& tape, Var x);

// Scalar sum_i weights[i] * xs[i] over scalar inputs.
template <typename T>
Var weighted_sum(Tape<T>& tape, const std::vector<Var>& xs, const std::vector<T>& weights);

}  // namespace dmsr::ops
