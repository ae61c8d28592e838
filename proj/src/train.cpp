// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <optional>

#include "dmsr/model.hpp"

namespace dmsr {

double lr_at(std::int64_t step, std::int64_t spe, const TrainConfig& tc) {
    if (step < 0) throw std::invalid_argument("lr_at: step must be >= 0");
    if (spe < 1) throw std::invalid_argument("lr_at: steps_per_epoch must be >= 1");
    const std::int64_t warm = static_cast<std::int64_t>(tc.warmup_epochs) * spe;
    if (step < warm) return tc.lr0 * static_cast<double>(step + 1) / static_cast<double>(warm);
    // The last scheduled step (total - 1) lands exactly on eta_min.
    const std::int64_t T = static_cast<std::int64_t>(tc.total_epochs) * spe - warm - 1;
    if (T <= 0) return tc.eta_min;
    const double t = static_cast<double>(std::min(step - warm, T));
    return tc.eta_min + 0.5 * (tc.lr0 - tc.eta_min) * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(T)));
}

bool AdamState::operator==(const AdamState& o) const {
    auto same = [](const std::map<std::string, Tensor<float>>& a, const std::map<std::string, Tensor<float>>& b) {
        if (a.size() != b.size()) return false;
        for (const auto& [name, t] : a) {
            auto it = b.find(name);
            if (it == b.end() || it->second.shape() != t.shape()) return false;
            if (std::memcmp(t.data(), it->second.data(), t.numel() * sizeof(float)) != 0) return false;
        }
        return true;
    };
    return t == o.t && same(m, o.m) && same(v, o.v);
}

namespace {

template <typename T>
std::string first_non_finite(const Tape<T>& tape) {
    for (std::size_t id = 0; id < tape.size(); ++id) {
        const auto& n = tape.node(static_cast<int>(id));
        if (!n.value.all_finite()) {
            return "tape node " + std::to_string(id) + " (" + n.op + (n.name.empty() ? "" : " '" + n.name + "'") +
                   ", shape " + shape_str(n.value.shape()) + ")";
        }
    }
    return "no tape value (gradient overflow)";
}

}  // namespace

LossReport train_step(const ModelConfig& cfg, const TrainConfig& tc, ParameterStore& params, AdamState& adam,
                      const PyramidBatch& batch, double lr) {
    for (const auto& [name, t] : params.tensors()) {
        if (!t.all_finite()) throw NonFiniteError("non-finite parameter tensor '" + name + "' before step");
    }
    Tape<float> tape(true);
    model::Context<float> ctx(tape, cfg, params, true);
    std::array<Var, 3> in, gt;
    for (int k = 0; k < 3; ++k) {
        in[k] = tape.constant(batch.rainy[k], "rainy");
        gt[k] = tape.constant(batch.clean[k], "clean");
    }
    std::optional<LossGraph<float>> graph;
    try {
        const auto out = model::dmsr_forward(ctx, in[0], in[1], in[2]);
        graph = loss_graph(tape, {out.full, out.half, out.quarter}, gt, tc.lambda_freq);
    } catch (const std::domain_error& e) {
        // Spectral ops refuse non-finite input before the loss is formed.
        throw NonFiniteError(std::string(e.what()) + "; first non-finite tensor: " + first_non_finite(tape));
    }
    const auto& g = *graph;
    const LossReport report = loss_report(tape, g, tc.lambda_freq);
    if (!std::isfinite(report.total)) {
        throw NonFiniteError("non-finite loss; first non-finite tensor: " + first_non_finite(tape));
    }
    tape.backward(g.total);

    for (const auto& [name, v] : ctx.params) {
        if (tape.has_grad(v) && !tape.grad(v).all_finite()) {
            throw NonFiniteError("non-finite gradient for parameter '" + name + "'");
        }
    }

    // Adam, bias-corrected.
    adam.t += 1;
    const double b1 = tc.adam_beta1, b2 = tc.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
    for (const auto& [name, v] : ctx.params) {
        Tensor<float>& p = params.at(name);
        auto mit = adam.m.try_emplace(name, p.shape()).first;
        auto vit = adam.v.try_emplace(name, p.shape()).first;
        Tensor<float>& m = mit->second;
        Tensor<float>& s = vit->second;
        const bool has = tape.has_grad(v);
        const Tensor<float>* gr = has ? &tape.grad(v) : nullptr;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const float gi = has ? (*gr)[i] : 0.0f;
            m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * gi);
            s[i] = static_cast<float>(b2 * s[i] + (1.0 - b2) * static_cast<double>(gi) * gi);
            const double mhat = m[i] / c1, vhat = s[i] / c2;
            p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + tc.adam_eps));
        }
    }

    // Running statistics use the unbiased batch variance.
    const double mom = model::kBatchNormMomentum;
    for (const auto& [name, st] : ctx.batch_stats) {
        Tensor<float>& rm = params.at(name + ".running_mean");
        Tensor<float>& rv = params.at(name + ".running_var");
        const double unbias = st.count > 1 ? static_cast<double>(st.count) / (st.count - 1) : 1.0;
        for (std::size_t c = 0; c < rm.numel(); ++c) {
            rm[c] = static_cast<float>((1 - mom) * rm[c] + mom * st.mean[c]);
            rv[c] = static_cast<float>((1 - mom) * rv[c] + mom * st.var[c] * unbias);
        }
    }
    return report;
}

std::int64_t steps_per_epoch(std::size_t n, int batch) {
    if (n == 0) return 0;
    return static_cast<std::int64_t>((n + batch - 1) / batch);
}

PyramidBatch training_batch(const std::vector<PairImages>& data, const TrainConfig& tc, std::int64_t step) {
    if (data.empty()) throw std::invalid_argument("training_batch: empty dataset");
    const std::int64_t spe = steps_per_epoch(data.size(), tc.batch);
    const std::int64_t epoch = step / spe, within = step % spe;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto perm_rng = sample_rng(tc.seed ^ 0x5045524dULL, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), perm_rng);

    std::vector<PyramidSample> samples;
    for (int j = 0; j < tc.batch; ++j) {
        const std::uint64_t k = static_cast<std::uint64_t>(within) * tc.batch + j;
        const PairImages& pair = data[order[k % data.size()]];
        auto rng = sample_rng(tc.seed, static_cast<std::uint64_t>(step) * tc.batch + j);
        samples.push_back(sample_patch(pair.rainy, pair.clean, tc.patch, rng, tc.augment_flips));
    }
    return make_batch(samples);
}

void write_csv_header(std::ostream& out) {
    out << "step,lr,total,l1_full,l1_half,l1_quarter,freq_full,freq_half,freq_quarter\n";
}

void write_csv_row(std::ostream& out, std::int64_t step, double lr, const LossReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(step), lr,
                  r.total, r.per_scale_l1[0], r.per_scale_l1[1], r.per_scale_l1[2], r.per_scale_freq[0],
                  r.per_scale_freq[1], r.per_scale_freq[2]);
    out << buf;
}

void train_loop(const ModelConfig& cfg, const TrainConfig& tc, const std::vector<PairImages>& data, TrainState& state,
                const TrainHooks& hooks, std::int64_t max_steps) {
    if (data.empty()) throw std::invalid_argument("train_loop: empty dataset");
    const std::int64_t spe = steps_per_epoch(data.size(), tc.batch);
    const std::int64_t total = static_cast<std::int64_t>(tc.total_epochs) * spe;
    const std::int64_t stop = max_steps < 0 ? total : std::min(total, state.step + max_steps);
    if (hooks.csv && state.step == 0) write_csv_header(*hooks.csv);
    while (state.step < stop) {
        const double lr = lr_at(state.step, spe, tc);
        const PyramidBatch batch = training_batch(data, tc, state.step);
        const LossReport r = train_step(cfg, tc, state.params, state.adam, batch, lr);
        if (hooks.csv) write_csv_row(*hooks.csv, state.step, lr, r);
        if (hooks.on_step) hooks.on_step(state.step, r);
        state.step += 1;
        if (hooks.on_checkpoint && tc.checkpoint_every > 0 && state.step % tc.checkpoint_every == 0) {
            hooks.on_checkpoint(state);
        }
    }
}

}  // namespace dmsr
