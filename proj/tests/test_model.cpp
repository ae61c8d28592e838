// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cmath>
#include <random>

#include "dmsr/model.hpp"
#include "dmsr/ops.hpp"
#include "fd_oracle.hpp"
#include "model_helpers.hpp"

using namespace dmsr;
using dmsr::test::random_tensor;
using dmsr::test::tiny_config;

namespace {

template <typename T>
void zero_all(BasicParameterStore<T>& store) {
    for (auto& [name, t] : store.tensors())
        if (store.trainable(name)) t.fill(T(0));
}

template <typename T>
void zero_prefix(BasicParameterStore<T>& store, const std::string& prefix) {
    for (auto& [name, t] : store.tensors())
        if (name.rfind(prefix, 0) == 0 && store.trainable(name)) t.fill(T(0));
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("shallow_embed shapes and zero weights") {
    std::mt19937_64 rng(1);
    ModelConfig cfg = tiny_config(8);
    auto store = init_parameters(cfg, 3).cast<double>();
    {
        Tape<double> t(false);
        model::Context<double> ctx(t, cfg, store, false);
        Var x = t.constant(random_tensor({2, 3, 16, 16}, rng));
        CHECK(t.shape(model::shallow_embed(ctx, x)) == Shape{2, 8, 16, 16});
    }
    zero_prefix(store, "embed");
    Tape<double> t(false);
    model::Context<double> ctx(t, cfg, store, false);
    const auto& y = t.value(model::shallow_embed(ctx, t.constant(random_tensor({1, 3, 16, 16}, rng))));
    for (double v : y.storage()) REQUIRE(v == 0.0);
    CHECK_THROWS_AS(model::shallow_embed(ctx, t.constant(random_tensor({1, 3, 18, 16}, rng))), ShapeError);
    CHECK_THROWS_AS(model::shallow_embed(ctx, t.constant(random_tensor({1, 1, 16, 16}, rng))), ShapeError);
}

TEST_CASE("shallow_embed at 64x64 with 32 channels") {
    ModelConfig cfg = tiny_config(32);
    auto store = init_parameters(cfg, 0);
    Tape<float> t(false);
    model::Context<float> ctx(t, cfg, store, false);
    Var x = t.constant(Tensor<float>({1, 3, 64, 64}, 0.5f));
    CHECK(t.shape(model::shallow_embed(ctx, x)) == Shape{1, 32, 64, 64});
}

TEST_CASE("spga with zero parameters halves its input") {
    std::mt19937_64 rng(2);
    ModelConfig cfg = tiny_config(16);
    auto store = init_parameters(cfg, 0).cast<double>();
    const std::string p = "enc0.unit0.mpsrm.branch0.spga";
    zero_prefix(store, p);
    Tape<double> t(false);
    model::Context<double> ctx(t, cfg, store, false);
    Tensor<double> xv = random_tensor({1, 16, 32, 32}, rng);
    Var x = t.constant(xv);
    Var y = model::spga(ctx, p, x);
    REQUIRE(t.shape(y) == Shape{1, 16, 32, 32});
    const auto& yv = t.value(y);
    for (std::size_t i = 0; i < xv.numel(); ++i) REQUIRE(yv[i] == doctest::Approx(0.5 * xv[i]).epsilon(1e-15));
}

TEST_CASE("spga map lies strictly inside (0,1)") {
    std::mt19937_64 rng(3);
    for (bool skip : {true, false}) {
        ModelConfig cfg = tiny_config(8);
        cfg.spga_skip_enabled = skip;
        auto store = init_parameters(cfg, 5).cast<double>();
        test::randomize(store, 6, 0.05);
        Tape<double> t(false);
        model::Context<double> ctx(t, cfg, store, false);
        const auto& w = t.value(model::spga_map(ctx, "enc0.unit0.mpsrm.branch1.spga",
                                                t.constant(random_tensor({2, 8, 12, 20}, rng))));
        REQUIRE(w.shape() == Shape{2, 8, 12, 20});
        for (double v : w.storage()) {
            REQUIRE(v > 0.0);
            REQUIRE(v < 1.0);
        }
    }
}

TEST_CASE("mpsrm preserves shape for the default pool rates") {
    std::mt19937_64 rng(4);
    ModelConfig cfg = tiny_config(8);
    CHECK(cfg.mpsrm_pool_rates == std::vector<int>{4, 2});
    auto store = init_parameters(cfg, 1);
    Tape<float> t(false);
    model::Context<float> ctx(t, cfg, store, false);
    Var x = t.constant(random_tensor({1, 8, 64, 64}, rng).cast<float>());
    CHECK(t.shape(model::mpsrm(ctx, "enc0.unit0.mpsrm", x)) == Shape{1, 8, 64, 64});
}

TEST_CASE("mpsrm without scale branches is the tail conv") {
    std::mt19937_64 rng(5);
    ModelConfig cfg = tiny_config(8);
    cfg.mpsrm_pool_rates = {};
    auto store = init_parameters(cfg, 2).cast<double>();
    test::randomize(store, 9);
    Tape<double> t(false);
    model::Context<double> ctx(t, cfg, store, false);
    Var x = t.constant(random_tensor({1, 8, 16, 16}, rng));
    const auto got = t.value(model::mpsrm(ctx, "enc0.unit0.mpsrm", x));

    // Reference: one dense 3x3 conv with zero padding, written out directly.
    const auto& w = store.at("enc0.unit0.mpsrm.tail.weight");
    const auto& b = store.at("enc0.unit0.mpsrm.tail.bias");
    const auto& xv = t.value(x);
    Tensor<double> ref({1, 8, 16, 16});
    for (int o = 0; o < 8; ++o)
        for (int y = 0; y < 16; ++y)
            for (int xx = 0; xx < 16; ++xx) {
                double acc = b[o];
                for (int i = 0; i < 8; ++i)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sy = y + ky - 1, sx = xx + kx - 1;
                            if (sy < 0 || sy >= 16 || sx < 0 || sx >= 16) continue;
                            acc += w.at(o, i, ky, kx) * xv.at(0, i, sy, sx);
                        }
                ref.at(0, o, y, xx) = acc;
            }
    CHECK(max_abs_diff(got, ref) < 1e-12);
}

TEST_CASE("fdsm_spatial widens by the number of kernels") {
    std::mt19937_64 rng(6);
    for (const std::vector<int>& ks : {std::vector<int>{3, 5, 7}, std::vector<int>{3, 3, 3}, std::vector<int>{3}}) {
        ModelConfig cfg = tiny_config(8);
        cfg.fdsm_kernels = ks;
        auto store = init_parameters(cfg, 0);
        Tape<float> t(false);
        model::Context<float> ctx(t, cfg, store, false);
        Var x = t.constant(random_tensor({1, 8, 16, 16}, rng).cast<float>());
        CHECK(t.shape(model::fdsm_spatial(ctx, "enc0.unit0.fdsm", x)) ==
              Shape{1, 8 * static_cast<int>(ks.size()), 16, 16});
    }
    CHECK(ModelConfig{}.fdsm_kernels == std::vector<int>{3, 5, 7});
}

TEST_CASE("fdsm_freq without modulation round-trips") {
    std::mt19937_64 rng(7);
    ModelConfig cfg = tiny_config(8);
    cfg.fdsm_modulation_pw_enabled = false;
    auto store = init_parameters(cfg, 0);
    auto store_d = store.cast<double>();
    const std::string p = "enc0.unit0.fdsm";

    Tensor<double> x = random_tensor({1, 24, 32, 32}, rng);
    {
        Tape<double> t(false);
        model::Context<double> ctx(t, cfg, store_d, false);
        const auto y = t.value(model::fdsm_freq(ctx, p, t.constant(x)));
        REQUIRE(y.shape() == x.shape());
        CHECK(max_abs_diff(y, x) < 1e-10);
    }
    {
        Tape<float> t(false);
        model::Context<float> ctx(t, cfg, store, false);
        const auto y = t.value(model::fdsm_freq(ctx, p, t.constant(x.cast<float>()))).cast<double>();
        CHECK(max_abs_diff(y, x) < 1e-5);
    }
    {
        Tape<double> t(false);
        model::Context<double> ctx(t, cfg, store_d, false);
        const auto y = t.value(model::fdsm_freq(ctx, p, t.constant(Tensor<double>({2, 24, 8, 12}, 0.7))));
        for (double v : y.storage()) REQUIRE(v == doctest::Approx(0.7).epsilon(1e-12));
    }
}

TEST_CASE("fdsm with a zero output projection is the identity") {
    std::mt19937_64 rng(8);
    for (bool multiconv : {true, false}) {
        ModelConfig cfg = tiny_config(8);
        cfg.fdsm_multiconv_enabled = multiconv;
        auto store = init_parameters(cfg, 4).cast<double>();
        test::randomize(store, 10);
        zero_prefix(store, "enc0.unit0.fdsm.out");
        Tape<double> t(false);
        model::Context<double> ctx(t, cfg, store, true);
        Tensor<double> x = random_tensor({1, 8, 64, 64}, rng);
        const auto& y = t.value(model::fdsm(ctx, "enc0.unit0.fdsm", t.constant(x)));
        REQUIRE(y.shape() == x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) REQUIRE(y[i] == x[i]);
    }
}

TEST_CASE("ddsam with zero residual branches is the identity") {
    std::mt19937_64 rng(9);
    for (int blocks : {1, 2}) {
        ModelConfig cfg = tiny_config(16, blocks);
        auto store = init_parameters(cfg, 0).cast<double>();
        zero_residual_branches(store);
        Tape<double> t(false);
        model::Context<double> ctx(t, cfg, store, false);
        Tensor<double> x = random_tensor({1, 16, 32, 32}, rng);
        const auto& y = t.value(model::ddsam(ctx, "enc0", t.constant(x), blocks));
        REQUIRE(y.shape() == x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) REQUIRE(y[i] == x[i]);
    }
}

TEST_CASE("ddsam keeps its shape for any block count") {
    std::mt19937_64 rng(10);
    ModelConfig cfg = tiny_config(16, 3);
    auto store = init_parameters(cfg, 0);
    Tape<float> t(false);
    model::Context<float> ctx(t, cfg, store, false);
    Var x = t.constant(random_tensor({1, 16, 32, 32}, rng).cast<float>());
    CHECK(t.shape(model::ddsam(ctx, "enc0", x, 3)) == Shape{1, 16, 32, 32});
    CHECK(ModelConfig{}.blocks_per_stage == std::vector<int>(6, 2));
}

TEST_CASE("down and up sampling shape contracts") {
    std::mt19937_64 rng(11);
    ModelConfig cfg = tiny_config(32);
    auto store = init_parameters(cfg, 0);
    Tape<float> t(false);
    model::Context<float> ctx(t, cfg, store, false);
    Var x = t.constant(random_tensor({1, 32, 64, 64}, rng).cast<float>());
    Var d = model::downsample_stage(ctx, "down0", x);
    CHECK(t.shape(d) == Shape{1, 64, 32, 32});
    CHECK(t.shape(model::upsample_stage(ctx, "up0", d)) == Shape{1, 32, 64, 64});
    CHECK_THROWS_AS(model::downsample_stage(ctx, "down0", t.constant(Tensor<float>({1, 32, 6, 7}))), ShapeError);
}

TEST_CASE("scale_inject shape and zero fuse") {
    std::mt19937_64 rng(12);
    ModelConfig cfg = tiny_config(32);
    auto store = init_parameters(cfg, 0).cast<double>();
    Tape<double> t(false);
    model::Context<double> ctx(t, cfg, store, false);
    Var f = t.constant(random_tensor({1, 64, 32, 32}, rng));
    Var s2 = t.constant(random_tensor({1, 3, 32, 32}, rng));
    CHECK(t.shape(model::scale_inject(ctx, "inject1", f, s2)) == Shape{1, 64, 32, 32});
    CHECK_THROWS_AS(model::scale_inject(ctx, "inject1", f, t.constant(Tensor<double>({1, 3, 16, 16}))), ShapeError);

    zero_prefix(store, "inject1.fuse");
    Tape<double> t2(false);
    model::Context<double> ctx2(t2, cfg, store, false);
    const auto& y = t2.value(model::scale_inject(ctx2, "inject1", t2.constant(t.value(f)), t2.constant(t.value(s2))));
    for (double v : y.storage()) REQUIRE(v == 0.0);
}

TEST_CASE("num_input_scales drops the injection layers") {
    for (int s : {1, 2, 3}) {
        ModelConfig cfg = tiny_config(4);
        cfg.num_input_scales = s;
        auto store = init_parameters(cfg, 0);
        CHECK(store.contains("inject1.fuse.weight") == (s >= 2));
        CHECK(store.contains("inject2.fuse.weight") == (s >= 3));
        const auto r = test::run_forward(cfg, store, test::random_image(32, 32, 1));
        CHECK(r.out[2].shape() == Shape{1, 3, 8, 8});
    }
}

TEST_CASE("output_head shape and zero identity") {
    std::mt19937_64 rng(13);
    ModelConfig cfg = tiny_config(32);
    auto store = init_parameters(cfg, 0).cast<double>();
    Tape<double> t(false);
    model::Context<double> ctx(t, cfg, store, false);
    Tensor<double> img = random_tensor({1, 3, 64, 64}, rng);
    const auto& y = t.value(model::output_head(ctx, "head0", t.constant(random_tensor({1, 32, 64, 64}, rng)),
                                               t.constant(img)));
    REQUIRE(y.shape() == Shape{1, 3, 64, 64});
    for (std::size_t i = 0; i < img.numel(); ++i) REQUIRE(y[i] == img[i]);
}

TEST_CASE("dmsr_forward shape contract across configs") {
    for (int c0 : {4, 8})
        for (int blocks : {1, 2}) {
            const auto r = test::run_forward(tiny_config(c0, blocks), init_parameters(tiny_config(c0, blocks), 1),
                                             test::random_image(64, 64, 2));
            CHECK(r.out[0].shape() == Shape{1, 3, 64, 64});
            CHECK(r.out[1].shape() == Shape{1, 3, 32, 32});
            CHECK(r.out[2].shape() == Shape{1, 3, 16, 16});
        }
    const auto r = test::run_forward(tiny_config(4), init_parameters(tiny_config(4), 1), test::random_image(48, 80, 3));
    CHECK(r.out[0].shape() == Shape{1, 3, 48, 80});
    CHECK(r.out[2].shape() == Shape{1, 3, 12, 20});
}

TEST_CASE("dmsr_forward rejects an inconsistent pyramid") {
    ModelConfig cfg = tiny_config(4);
    auto store = init_parameters(cfg, 0);
    Tape<float> t(false);
    model::Context<float> ctx(t, cfg, store, false);
    Var s1 = t.constant(Tensor<float>({1, 3, 32, 32}));
    Var s2 = t.constant(Tensor<float>({1, 3, 16, 16}));
    Var s3 = t.constant(Tensor<float>({1, 3, 4, 4}));
    CHECK_THROWS_AS(model::dmsr_forward(ctx, s1, s2, s3), ShapeError);
}

TEST_CASE("encoder channel widths double per scale") {
    ModelConfig cfg = tiny_config(8);
    auto store = init_parameters(cfg, 0);
    CHECK(store.at("embed.weight").dim(0) == 8);
    CHECK(store.at("down0.weight").dim(0) == 16);
    CHECK(store.at("down1.weight").dim(0) == 32);
    CHECK(store.at("enc2.unit0.mpsrm.tail.weight").dim(0) == 32);
}

TEST_CASE("fresh init with zero heads is the identity on the pyramid") {
    ModelConfig cfg = tiny_config(8);
    auto store = init_parameters(cfg, 7);
    const auto r = test::run_forward(cfg, store, test::random_image(64, 64, 4));
    for (int k = 0; k < 3; ++k) CHECK(r.out[k].storage() == r.in[k].storage());
}

TEST_CASE("zeroed residual branches give the identity in training mode") {
    ModelConfig cfg = tiny_config(4, 2);
    auto store = init_parameters(cfg, 7);
    test::randomize(store, 3);
    zero_residual_branches(store);
    const auto r = test::run_forward(cfg, store, test::random_image(32, 32, 5), true);
    for (int k = 0; k < 3; ++k) CHECK(r.out[k].storage() == r.in[k].storage());
}

TEST_CASE("dmsr_forward is deterministic") {
    ModelConfig cfg = tiny_config(4);
    auto store = init_parameters(cfg, 11);
    test::randomize(store, 12);
    const Image img = test::random_image(32, 32, 6);
    const auto a = test::run_forward(cfg, store, img);
    const auto b = test::run_forward(cfg, store, img);
    for (int k = 0; k < 3; ++k) CHECK(a.out[k].storage() == b.out[k].storage());
}

TEST_CASE("every ablation variant builds and keeps the shape contract") {
    const auto variants = ablation_variants(tiny_config(4));
    CHECK(variants.size() >= 19);
    for (const auto& v : variants) {
        CAPTURE(v.name);
        const auto r = test::run_forward(v.config, init_parameters(v.config, 0), test::random_image(32, 32, 7), true);
        CHECK(r.out[0].shape() == Shape{1, 3, 32, 32});
        CHECK(r.out[1].shape() == Shape{1, 3, 16, 16});
        CHECK(r.out[2].shape() == Shape{1, 3, 8, 8});
    }
}
