// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "dmsr/data.hpp"
#include "dmsr/loss.hpp"
#include "dmsr/model.hpp"
#include "dmsr/parameters.hpp"

namespace dmsr {

namespace {

using Store = BasicParameterStore<double>;

struct Problem {
    const ModelConfig& cfg;
    std::array<Tensor<double>, 3> in, gt;
    double lambda;

    double loss(const Store& store) const {
        Tape<double> tape(false);
        model::Context<double> ctx(tape, cfg, store, true);
        return run(tape, ctx).first;
    }

    std::pair<double, Var> run(Tape<double>& tape, model::Context<double>& ctx) const {
        std::array<Var, 3> s, g;
        for (int k = 0; k < 3; ++k) {
            s[k] = tape.constant(in[k]);
            g[k] = tape.constant(gt[k]);
        }
        const auto out = model::dmsr_forward(ctx, s[0], s[1], s[2]);
        const auto lg = loss_graph(tape, {out.full, out.half, out.quarter}, g, lambda);
        return {tape.value(lg.total)[0], lg.total};
    }
};

}  // namespace

GradCheckReport grad_check(const ModelConfig& cfg, const GradCheckOptions& opt) {
    cfg.validate();
    Store store = init_parameters(cfg, opt.seed).cast<double>();
    std::mt19937_64 rng(splitmix64(opt.seed ^ 0x67726164ULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& [name, t] : store.tensors()) {
        if (name.rfind("head", 0) != 0) continue;
        const double scale = t.rank() == 4 ? std::sqrt(2.0 / (t.dim(1) * t.dim(2) * t.dim(3))) : 0.1;
        for (auto& v : t.storage()) v = scale * normal(rng);
    }

    const int S = opt.image_size;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Image rainy(S, S), clean(S, S);
    for (auto& v : rainy.pixels) v = unit(rng);
    // Target near the input so the loss is dominated by what the network adds.
    std::normal_distribution<double> jitter(0.0, 0.05);
    for (std::size_t i = 0; i < clean.pixels.size(); ++i) clean.pixels[i] = rainy.pixels[i] + jitter(rng);
    const PyramidSample ps = build_pyramid(rainy, clean);
    Problem prob{cfg, {}, {}, opt.lambda_freq};
    for (int k = 0; k < 3; ++k) {
        prob.in[k] = image_to_tensor<double>(ps.rainy[k]);
        prob.gt[k] = image_to_tensor<double>(ps.clean[k]);
    }

    std::map<std::string, Tensor<double>> analytic;
    {
        Tape<double> tape(true);
        model::Context<double> ctx(tape, cfg, store, true);
        const auto [value, root] = prob.run(tape, ctx);
        tape.backward(root);
        for (const auto& [name, v] : ctx.params) {
            analytic[name] = tape.has_grad(v) ? tape.grad(v) : Tensor<double>(tape.shape(v));
            if (opt.tamper) opt.tamper(name, analytic[name]);
        }
    }

    GradCheckReport report;
    for (auto& [name, grad] : analytic) {
        Tensor<double>& p = store.at(name);
        std::vector<std::size_t> coords(p.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > static_cast<std::size_t>(opt.coords_per_tensor)) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opt.coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t i : coords) {
            const double orig = p[i];
            p[i] = orig + opt.h;
            const double up = prob.loss(store);
            p[i] = orig - opt.h;
            const double down = prob.loss(store);
            p[i] = orig;
            const double numeric = (up - down) / (2 * opt.h);
            const double a = grad[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.rel_floor});
            GradCheckEntry e{name, i, a, numeric, rel};
            if (rel > report.max_rel_err || report.coords_checked == 0) {
                report.max_rel_err = rel;
                report.worst = e;
            }
            if (!(rel < opt.tolerance)) report.failures.push_back(e);
            ++report.coords_checked;
        }
        ++report.tensors_checked;
    }
    return report;
}

}  // namespace dmsr
