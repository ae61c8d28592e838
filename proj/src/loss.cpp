// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/loss.hpp"

#include "dmsr/ops.hpp"
#include "dmsr/spectral.hpp"

namespace dmsr {

template <typename T>
LossGraph<T> loss_graph(Tape<T>& tape, const std::array<Var, 3>& outs, const std::array<Var, 3>& gts,
                        double lambda_freq) {
    LossGraph<T> g;
    std::vector<Var> terms;
    std::vector<T> weights;
    for (int k = 0; k < 3; ++k) {
        if (tape.shape(outs[k]) != tape.shape(gts[k])) {
            throw ShapeError("loss: scale " + std::to_string(k) + " output " + shape_str(tape.shape(outs[k])) +
                             " does not match target " + shape_str(tape.shape(gts[k])));
        }
        Var diff = ops::sub(tape, outs[k], gts[k]);
        g.l1[k] = ops::mean_abs(tape, diff);
        g.freq[k] = ops::mean_abs(tape, ops::rfft2_stacked(tape, diff));
        terms.push_back(g.l1[k]);
        weights.push_back(T(1));
        terms.push_back(g.freq[k]);
        weights.push_back(static_cast<T>(lambda_freq));
    }
    g.total = ops::weighted_sum(tape, terms, weights);
    return g;
}

template <typename T>
LossReport loss_report(const Tape<T>& tape, const LossGraph<T>& g, double lambda_freq) {
    LossReport r;
    double l1 = 0, fr = 0;
    for (int k = 0; k < 3; ++k) {
        r.per_scale_l1[k] = static_cast<double>(tape.value(g.l1[k])[0]);
        r.per_scale_freq[k] = static_cast<double>(tape.value(g.freq[k])[0]);
        l1 += r.per_scale_l1[k];
        fr += r.per_scale_freq[k];
    }
    r.total = l1 + lambda_freq * fr;
    return r;
}

template <typename T>
LossReport loss_fn(const std::array<Tensor<T>, 3>& outs, const std::array<Tensor<T>, 3>& gts, double lambda_freq) {
    Tape<T> tape(false);
    std::array<Var, 3> o, t;
    for (int k = 0; k < 3; ++k) {
        o[k] = tape.constant(outs[k]);
        t[k] = tape.constant(gts[k]);
    }
    return loss_report(tape, loss_graph(tape, o, t, lambda_freq), lambda_freq);
}

#define DMSR_INSTANTIATE_LOSS(T)                                                                               \
    template LossGraph<T> loss_graph<T>(Tape<T>&, const std::array<Var, 3>&, const std::array<Var, 3>&, double); \
    template LossReport loss_report<T>(const Tape<T>&, const LossGraph<T>&, double);                            \
    template LossReport loss_fn<T>(const std::array<Tensor<T>, 3>&, const std::array<Tensor<T>, 3>&, double);

DMSR_INSTANTIATE_LOSS(float)
DMSR_INSTANTIATE_LOSS(double)

}  // namespace dmsr
