// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dual-domain multi-scale deraining network.
//
// Layout (C0 = base_channels):
//
//   S1 -> embed -> enc0 -> down0 -> [inject S2] -> enc1 -> down1 -> [inject S3] -> enc2
//   enc2 -> dec2 -> head2 (+S3) ............................................ quarter output
//        -> up1 -> concat(enc1) -> skip1 -> dec1 -> head1 (+S2) ............. half output
//        -> up0 -> concat(enc0) -> skip0 -> dec0 -> head0 (+S1) ............. full output
//
// Each stage enc*/dec* is a DDSAM: a stack of residual units x + FDSM(MPSRM(x)).
// Channel widths are C0, 2*C0, 4*C0 at full, half and quarter resolution.

#pragma once

#include <functional>
#include <map>
#include <string>

#include "dmsr/config.hpp"
#include "dmsr/ops.hpp"
#include "dmsr/parameters.hpp"

namespace dmsr::model {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

inline constexpr const char* kStageNames[6] = {"enc0", "enc1", "enc2", "dec2", "dec1", "dec0"};

// Binding of a parameter store onto a tape for one forward pass.
template <typename T>
struct Context {
    Tape<T>& tape;
    const ModelConfig& cfg;
    const BasicParameterStore<T>& store;
    bool training;
    std::map<std::string, Var> params;
    // Per-BN-layer batch statistics gathered during a training-mode pass.
    std::map<std::string, ops::BatchStats<T>> batch_stats;

    Context(Tape<T>& t, const ModelConfig& c, const BasicParameterStore<T>& s, bool train);

    Var param(const std::string& name) const;
    const Tensor<T>& buffer(const std::string& name) const { return store.at(name); }
};

template <typename T>
struct PyramidOutputs {
    Var full, half, quarter;
};

template <typename T>
Var shallow_embed(Context<T>& ctx, Var image);

// Sigmoid pixel map W in (0,1) with the shape of x.
template <typename T>
Var spga_map(Context<T>& ctx, const std::string& prefix, Var x);
// x ⊙ spga_map(x).
template <typename T>
Var spga(Context<T>& ctx, const std::string& prefix, Var x);

template <typename T>
Var mpsrm(Context<T>& ctx, const std::string& prefix, Var f);

template <typename T>
Var fdsm_spatial(Context<T>& ctx, const std::string& prefix, Var x);
template <typename T>
Var fdsm_freq(Context<T>& ctx, const std::string& prefix, Var xs);
template <typename T>
Var fdsm(Context<T>& ctx, const std::string& prefix, Var x);

template <typename T>
Var ddsam(Context<T>& ctx, const std::string& prefix, Var f, int n_blocks);

template <typename T>
Var downsample_stage(Context<T>& ctx, const std::string& prefix, Var f);
template <typename T>
Var upsample_stage(Context<T>& ctx, const std::string& prefix, Var f);

template <typename T>
Var scale_inject(Context<T>& ctx, const std::string& prefix, Var f, Var image);

template <typename T>
Var output_head(Context<T>& ctx, const std::string& prefix, Var f, Var image);

// s1: B×3×H×W with H, W divisible by 4; s2, s3 at exactly half and quarter size.
template <typename T>
PyramidOutputs<T> dmsr_forward(Context<T>& ctx, Var s1, Var s2, Var s3);

// Declares every tensor of the network. `sink(name, shape, kind)` is invoked
// once per tensor in a fixed order.
// ResidualWeight marks the last conv of a residual branch (MPSRM tail, FDSM
// output projection); it is initialized at a reduced gain.
enum class TensorKind { ConvWeight, ResidualWeight, HeadWeight, Bias, BnScale, BnShift, BnMean, BnVar };
void declare_parameters(const ModelConfig& cfg,
                        const std::function<void(const std::string&, const Shape&, TensorKind)>& sink);

}  // namespace dmsr::model
