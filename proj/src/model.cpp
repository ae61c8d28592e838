// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/model.hpp"

#include <algorithm>

#include "dmsr/spectral.hpp"

namespace dmsr::model {

namespace {

int reduced(int channels) { return std::max(1, channels / 4); }

int fdsm_branches(const ModelConfig& cfg) { return static_cast<int>(cfg.fdsm_kernels.size()); }

int stage_channels(const ModelConfig& cfg, int level) { return cfg.base_channels << level; }

std::string idx(const char* stem, std::size_t i) { return std::string(stem) + std::to_string(i); }

template <typename T>
Var conv(Context<T>& ctx, const std::string& name, Var x, int pad, int stride = 1, int groups = 1) {
    return ops::conv2d(ctx.tape, x, ctx.param(name + ".weight"), ctx.param(name + ".bias"),
                       ops::ConvSpec{stride, pad, groups});
}

template <typename T>
Var same_conv(Context<T>& ctx, const std::string& name, Var x) {
    const int k = ctx.tape.value(ctx.param(name + ".weight")).h();
    return conv(ctx, name, x, k / 2);
}

template <typename T>
Var batch_norm(Context<T>& ctx, const std::string& name, Var x) {
    Var gamma = ctx.param(name + ".weight");
    Var beta = ctx.param(name + ".bias");
    if (ctx.training) {
        return ops::batch_norm<T>(ctx.tape, x, gamma, beta, true, nullptr, nullptr, T(kBatchNormEps),
                                  &ctx.batch_stats[name]);
    }
    return ops::batch_norm<T>(ctx.tape, x, gamma, beta, false, &ctx.buffer(name + ".running_mean"),
                           &ctx.buffer(name + ".running_var"), T(kBatchNormEps), nullptr);
}

template <typename T>
void require_spatial_match(Context<T>& ctx, Var a, Var b, const char* what) {
    const Shape sa = ctx.tape.shape(a);
    const Shape sb = ctx.tape.shape(b);
    if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
        throw ShapeError(std::string(what) + ": feature " + shape_str(sa) + " and image " + shape_str(sb) +
                         " differ in batch or spatial size");
    }
}

struct Declarer {
    const ModelConfig& cfg;
    const std::function<void(const std::string&, const Shape&, TensorKind)>& sink;

    void conv(const std::string& name, int cout, int cin, int k, TensorKind kind = TensorKind::ConvWeight) const {
        sink(name + ".weight", {cout, cin, k, k}, kind);
        sink(name + ".bias", {cout}, TensorKind::Bias);
    }
    void depthwise(const std::string& name, int c, int k) const { conv(name, c, 1, k); }
    void transposed(const std::string& name, int cin, int cout, int k) const {
        sink(name + ".weight", {cin, cout, k, k}, TensorKind::ConvWeight);
        sink(name + ".bias", {cout}, TensorKind::Bias);
    }
    void bn(const std::string& name, int c) const {
        sink(name + ".weight", {c}, TensorKind::BnScale);
        sink(name + ".bias", {c}, TensorKind::BnShift);
        sink(name + ".running_mean", {c}, TensorKind::BnMean);
        sink(name + ".running_var", {c}, TensorKind::BnVar);
    }

    void spga(const std::string& p, int c) const {
        const int r = reduced(c);
        conv(p + ".pw_s", r, c, 1);
        conv(p + ".ws", c, 2 * r, 7);
        conv(p + ".pw_g1", r, c, 1);
        depthwise(p + ".dw", r, 3);
        conv(p + ".pw_g2", c, r, 1);
        conv(p + ".fuse", c, cfg.spga_skip_enabled ? 2 * c : c, 7);
    }
    void mpsrm(const std::string& p, int c) const {
        if (cfg.spga_enabled) {
            for (std::size_t i = 0; i < cfg.mpsrm_pool_rates.size(); ++i) spga(p + idx(".branch", i) + ".spga", c);
        }
        if (cfg.mpsrm_tail_conv_enabled) conv(p + ".tail", c, c, 3, TensorKind::ResidualWeight);
    }
    void fdsm(const std::string& p, int c) const {
        const int nb = fdsm_branches(cfg);
        conv(p + ".pw_in", nb * c, c, 1);
        if (cfg.fdsm_multiconv_enabled) {
            for (int i = 0; i < nb; ++i) {
                conv(p + idx(".branch", i) + ".conv", c, c, cfg.fdsm_kernels[i]);
                conv(p + idx(".branch", i) + ".pw", c, c, 1);
            }
        } else {
            conv(p + ".shared.conv", c, c, 3);
            conv(p + ".shared.pw", c, c, 1);
        }
        if (cfg.fdsm_fft_enabled && cfg.fdsm_modulation_pw_enabled) {
            conv(p + ".mod.pw", 2 * nb * c, 2 * nb * c, 1);
            bn(p + ".mod.bn", 2 * nb * c);
        }
        conv(p + ".out", c, nb * c, 1, TensorKind::ResidualWeight);
    }
    void stage(const std::string& p, int c, int units) const {
        for (int u = 0; u < units; ++u) {
            mpsrm(p + idx(".unit", u) + ".mpsrm", c);
            fdsm(p + idx(".unit", u) + ".fdsm", c);
        }
    }
    void inject(const std::string& p, int c) const {
        const int c0 = cfg.base_channels;
        conv(p + ".emb1", c0, 3, 3);
        conv(p + ".emb2", c0, c0, 3);
        conv(p + ".adjust", c, c0, 3);
        conv(p + ".fuse", c, 2 * c, 1);
    }
};

}  // namespace

void declare_parameters(const ModelConfig& cfg,
                        const std::function<void(const std::string&, const Shape&, TensorKind)>& sink) {
    cfg.validate();
    const Declarer d{cfg, sink};
    const int c0 = stage_channels(cfg, 0), c1 = stage_channels(cfg, 1), c2 = stage_channels(cfg, 2);
    const auto& n = cfg.blocks_per_stage;
    d.conv("embed", c0, 3, 3);
    d.stage("enc0", c0, n[0]);
    d.conv("down0", c1, c0, 3);
    if (cfg.num_input_scales >= 2) d.inject("inject1", c1);
    d.stage("enc1", c1, n[1]);
    d.conv("down1", c2, c1, 3);
    if (cfg.num_input_scales >= 3) d.inject("inject2", c2);
    d.stage("enc2", c2, n[2]);
    d.stage("dec2", c2, n[3]);
    d.conv("head2", 3, c2, 3, TensorKind::HeadWeight);
    d.transposed("up1", c2, c1, 3);
    d.conv("skip1", c1, 2 * c1, 1);
    d.stage("dec1", c1, n[4]);
    d.conv("head1", 3, c1, 3, TensorKind::HeadWeight);
    d.transposed("up0", c1, c0, 3);
    d.conv("skip0", c0, 2 * c0, 1);
    d.stage("dec0", c0, n[5]);
    d.conv("head0", 3, c0, 3, TensorKind::HeadWeight);
}

template <typename T>
Context<T>::Context(Tape<T>& t, const ModelConfig& c, const BasicParameterStore<T>& s, bool train)
    : tape(t), cfg(c), store(s), training(train) {
    for (const auto& [name, value] : store.tensors()) {
        if (store.trainable(name)) params.emplace(name, tape.leaf(value, name, true));
    }
}

template <typename T>
Var Context<T>::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("parameter store has no tensor '" + name + "'");
    return it->second;
}

template <typename T>
Var shallow_embed(Context<T>& ctx, Var image) {
    const Shape s = ctx.tape.shape(image);
    require_rank4(s, "shallow_embed");
    if (s[1] != 3) throw ShapeError("shallow_embed: expected 3-channel images, got " + shape_str(s));
    if (s[2] % 4 != 0 || s[3] % 4 != 0) {
        throw ShapeError("shallow_embed: spatial size " + shape_str(s) + " is not divisible by 4");
    }
    return conv(ctx, "embed", image, 1);
}

template <typename T>
Var spga_map(Context<T>& ctx, const std::string& p, Var x) {
    Tape<T>& t = ctx.tape;
    const Shape s = t.shape(x);
    Var squeezed = conv(ctx, p + ".pw_s", x, 0);
    Var pooled = ops::concat_channels(t, {ops::avg_pool(t, squeezed, 2), ops::max_pool(t, squeezed, 2)});
    Var ws = ops::resize_bilinear(t, same_conv(ctx, p + ".ws", pooled), s[2], s[3]);
    Var wg = conv(ctx, p + ".pw_g2", conv(ctx, p + ".dw", conv(ctx, p + ".pw_g1", x, 0), 1, 1, reduced(s[1])), 0);
    Var wm = ops::mul(t, ws, wg);
    Var fuse_in = ctx.cfg.spga_skip_enabled ? ops::concat_channels(t, {x, wm}) : wm;
    return ops::sigmoid(t, same_conv(ctx, p + ".fuse", fuse_in));
}

template <typename T>
Var spga(Context<T>& ctx, const std::string& p, Var x) {
    return ops::mul(ctx.tape, x, spga_map(ctx, p, x));
}

template <typename T>
Var mpsrm(Context<T>& ctx, const std::string& p, Var f) {
    Tape<T>& t = ctx.tape;
    const Shape s = t.shape(f);
    require_rank4(s, "mpsrm");
    const int H = s[2], W = s[3];
    Var acc = f;
    Var prev;
    const auto& rates = ctx.cfg.mpsrm_pool_rates;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        Var branch = ops::avg_pool(t, f, rates[i]);
        if (prev.valid()) {
            const Shape bs = t.shape(branch);
            branch = ops::add(t, branch, ops::resize_bilinear(t, prev, bs[2], bs[3]));
        }
        if (ctx.cfg.spga_enabled) branch = spga(ctx, p + idx(".branch", i) + ".spga", branch);
        acc = ops::add(t, acc, ops::resize_bilinear(t, branch, H, W));
        prev = branch;
    }
    return ctx.cfg.mpsrm_tail_conv_enabled ? conv(ctx, p + ".tail", acc, 1) : acc;
}

template <typename T>
Var fdsm_spatial(Context<T>& ctx, const std::string& p, Var x) {
    Tape<T>& t = ctx.tape;
    const int c = t.shape(x)[1];
    const int nb = fdsm_branches(ctx.cfg);
    Var expanded = conv(ctx, p + ".pw_in", x, 0);
    std::vector<Var> branches;
    for (int i = 0; i < nb; ++i) {
        Var chunk = ops::slice_channels(t, expanded, i * c, c);
        const std::string b = ctx.cfg.fdsm_multiconv_enabled ? p + idx(".branch", i) : p + ".shared";
        branches.push_back(conv(ctx, b + ".pw", ops::gelu(t, same_conv(ctx, b + ".conv", chunk)), 0));
    }
    return ops::concat_channels(t, branches);
}

template <typename T>
Var fdsm_freq(Context<T>& ctx, const std::string& p, Var xs) {
    if (!ctx.cfg.fdsm_fft_enabled) return xs;
    Tape<T>& t = ctx.tape;
    const int width = t.shape(xs)[3];
    Var spectrum = ops::rfft2_stacked(t, xs);
    if (ctx.cfg.fdsm_modulation_pw_enabled) {
        spectrum = ops::relu(t, batch_norm(ctx, p + ".mod.bn", conv(ctx, p + ".mod.pw", spectrum, 0)));
    }
    return ops::irfft2_stacked(t, spectrum, width);
}

template <typename T>
Var fdsm(Context<T>& ctx, const std::string& p, Var x) {
    Var mixed = fdsm_freq(ctx, p, fdsm_spatial(ctx, p, x));
    return ops::add(ctx.tape, x, conv(ctx, p + ".out", mixed, 0));
}

template <typename T>
Var ddsam(Context<T>& ctx, const std::string& p, Var f, int n_blocks) {
    if (n_blocks < 1) throw std::invalid_argument("ddsam: n_blocks must be >= 1");
    for (int u = 0; u < n_blocks; ++u) {
        const std::string unit = p + idx(".unit", u);
        f = ops::add(ctx.tape, f, fdsm(ctx, unit + ".fdsm", mpsrm(ctx, unit + ".mpsrm", f)));
    }
    return f;
}

template <typename T>
Var downsample_stage(Context<T>& ctx, const std::string& p, Var f) {
    const Shape s = ctx.tape.shape(f);
    if (s[2] % 2 != 0 || s[3] % 2 != 0) {
        throw ShapeError("downsample_stage: odd spatial size " + shape_str(s));
    }
    return conv(ctx, p, f, 1, 2);
}

template <typename T>
Var upsample_stage(Context<T>& ctx, const std::string& p, Var f) {
    return ops::conv_transpose2d(ctx.tape, f, ctx.param(p + ".weight"), ctx.param(p + ".bias"), 2, 1, 1);
}

template <typename T>
Var scale_inject(Context<T>& ctx, const std::string& p, Var f, Var image) {
    require_spatial_match(ctx, f, image, "scale_inject");
    Tape<T>& t = ctx.tape;
    Var embedded = conv(ctx, p + ".emb2", ops::gelu(t, conv(ctx, p + ".emb1", image, 1)), 1);
    Var adjusted = conv(ctx, p + ".adjust", embedded, 1);
    return conv(ctx, p + ".fuse", ops::concat_channels(t, {f, adjusted}), 0);
}

template <typename T>
Var output_head(Context<T>& ctx, const std::string& p, Var f, Var image) {
    require_spatial_match(ctx, f, image, "output_head");
    return ops::add(ctx.tape, image, conv(ctx, p, f, 1));
}

template <typename T>
PyramidOutputs<T> dmsr_forward(Context<T>& ctx, Var s1, Var s2, Var s3) {
    Tape<T>& t = ctx.tape;
    const Shape a = t.shape(s1);
    require_rank4(a, "dmsr_forward");
    const Shape expect2{a[0], 3, a[2] / 2, a[3] / 2}, expect4{a[0], 3, a[2] / 4, a[3] / 4};
    if (t.shape(s2) != expect2 || t.shape(s3) != expect4) {
        throw ShapeError("dmsr_forward: inconsistent pyramid " + shape_str(a) + ", " + shape_str(t.shape(s2)) + ", " +
                         shape_str(t.shape(s3)));
    }
    const auto& n = ctx.cfg.blocks_per_stage;

    Var e0 = ddsam(ctx, "enc0", shallow_embed(ctx, s1), n[0]);
    Var x = downsample_stage(ctx, "down0", e0);
    if (ctx.cfg.num_input_scales >= 2) x = scale_inject(ctx, "inject1", x, s2);
    Var e1 = ddsam(ctx, "enc1", x, n[1]);
    x = downsample_stage(ctx, "down1", e1);
    if (ctx.cfg.num_input_scales >= 3) x = scale_inject(ctx, "inject2", x, s3);
    Var e2 = ddsam(ctx, "enc2", x, n[2]);

    PyramidOutputs<T> out;
    Var d2 = ddsam(ctx, "dec2", e2, n[3]);
    out.quarter = output_head(ctx, "head2", d2, s3);
    x = conv(ctx, "skip1", ops::concat_channels(t, {upsample_stage(ctx, "up1", d2), e1}), 0);
    Var d1 = ddsam(ctx, "dec1", x, n[4]);
    out.half = output_head(ctx, "head1", d1, s2);
    x = conv(ctx, "skip0", ops::concat_channels(t, {upsample_stage(ctx, "up0", d1), e0}), 0);
    Var d0 = ddsam(ctx, "dec0", x, n[5]);
    out.full = output_head(ctx, "head0", d0, s1);
    return out;
}

#define DMSR_INSTANTIATE_MODEL(T)                                                            \
    template struct Context<T>;                                                              \
    template Var shallow_embed<T>(Context<T>&, Var);                                         \
    template Var spga_map<T>(Context<T>&, const std::string&, Var);                          \
    template Var spga<T>(Context<T>&, const std::string&, Var);                              \
    template Var mpsrm<T>(Context<T>&, const std::string&, Var);                             \
    template Var fdsm_spatial<T>(Context<T>&, const std::string&, Var);                      \
    template Var fdsm_freq<T>(Context<T>&, const std::string&, Var);                         \
    template Var fdsm<T>(Context<T>&, const std::string&, Var);                              \
    template Var ddsam<T>(Context<T>&, const std::string&, Var, int);                        \
    template Var downsample_stage<T>(Context<T>&, const std::string&, Var);                  \
    template Var upsample_stage<T>(Context<T>&, const std::string&, Var);                    \
    template Var scale_inject<T>(Context<T>&, const std::string&, Var, Var);                 \
    template Var output_head<T>(Context<T>&, const std::string&, Var, Var);                  \
    template PyramidOutputs<T> dmsr_forward<T>(Context<T>&, Var, Var, Var);

DMSR_INSTANTIATE_MODEL(float)
DMSR_INSTANTIATE_MODEL(double)

}  // namespace dmsr::model
