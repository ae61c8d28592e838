// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <random>

#include "dmsr/ops.hpp"
#include "fd_oracle.hpp"

using namespace dmsr;
using dmsr::test::max_fd_error;
using dmsr::test::project;
using dmsr::test::random_tensor;

namespace {
constexpr double kGradTol = 1e-6;
}

TEST_CASE("conv2d matches a direct nested-loop convolution") {
    std::mt19937_64 rng(1);
    const auto x = random_tensor({2, 3, 7, 6}, rng);
    const auto w = random_tensor({4, 3, 3, 3}, rng);
    const auto b = random_tensor({4}, rng);
    for (int stride : {1, 2}) {
        Tape<double> tape(false);
        Var y = ops::conv2d(tape, tape.constant(x), tape.constant(w), tape.constant(b), {stride, 1, 1});
        const auto& yv = tape.value(y);
        for (int n = 0; n < 2; ++n)
            for (int o = 0; o < 4; ++o)
                for (int i = 0; i < yv.h(); ++i)
                    for (int j = 0; j < yv.w(); ++j) {
                        double acc = b[o];
                        for (int c = 0; c < 3; ++c)
                            for (int ki = 0; ki < 3; ++ki)
                                for (int kj = 0; kj < 3; ++kj) {
                                    const int iy = i * stride - 1 + ki, ix = j * stride - 1 + kj;
                                    if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                                    acc += w.at(o, c, ki, kj) * x.at(n, c, iy, ix);
                                }
                        CHECK(yv.at(n, o, i, j) == doctest::Approx(acc).epsilon(1e-12));
                    }
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    std::mt19937_64 rng(2);
    SUBCASE("dense 3x3 stride 1") {
        auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
            return project(t, ops::conv2d(t, v[0], v[1], v[2], {1, 1, 1}));
        };
        CHECK(max_fd_error(fn, {random_tensor({2, 3, 5, 6}, rng), random_tensor({4, 3, 3, 3}, rng),
                                random_tensor({4}, rng)}) < kGradTol);
    }
    SUBCASE("dense 3x3 stride 2") {
        auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
            return project(t, ops::conv2d(t, v[0], v[1], v[2], {2, 1, 1}));
        };
        CHECK(max_fd_error(fn, {random_tensor({1, 2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng),
                                random_tensor({3}, rng)}) < kGradTol);
    }
    SUBCASE("pointwise") {
        auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
            return project(t, ops::conv2d(t, v[0], v[1], v[2], {}));
        };
        CHECK(max_fd_error(fn, {random_tensor({2, 3, 4, 4}, rng), random_tensor({5, 3, 1, 1}, rng),
                                random_tensor({5}, rng)}) < kGradTol);
    }
    SUBCASE("depth-wise") {
        auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
            return project(t, ops::conv2d(t, v[0], v[1], v[2], {1, 1, 3}));
        };
        CHECK(max_fd_error(fn, {random_tensor({2, 3, 5, 4}, rng), random_tensor({3, 1, 3, 3}, rng),
                                random_tensor({3}, rng)}) < kGradTol);
    }
}

TEST_CASE("conv_transpose2d is the adjoint of the strided conv") {
    std::mt19937_64 rng(3);
    const auto w = random_tensor({4, 3, 3, 3}, rng);  // conv 3->4; transposed 4->3
    const auto x = random_tensor({1, 3, 8, 8}, rng);
    const auto y = random_tensor({1, 4, 4, 4}, rng);
    Tape<double> tape(false);
    Var cx = ops::conv2d(tape, tape.constant(x), tape.constant(w), Var{}, {2, 1, 1});
    Var ty = ops::conv_transpose2d(tape, tape.constant(y), tape.constant(w), Var{}, 2, 1, 1);
    REQUIRE(tape.shape(ty) == Shape{1, 3, 8, 8});
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) lhs += tape.value(cx)[i] * y[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += tape.value(ty)[i] * x[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

    auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::conv_transpose2d(t, v[0], v[1], v[2], 2, 1, 1));
    };
    CHECK(max_fd_error(fn, {random_tensor({2, 4, 3, 3}, rng), random_tensor({4, 3, 3, 3}, rng),
                            random_tensor({3}, rng)}) < kGradTol);
}

TEST_CASE("pooling values, ceil mode and gradients") {
    Tensor<double> x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tape<double> tape(false);
    Var a = ops::avg_pool(tape, tape.constant(x), 2);
    Var m = ops::max_pool(tape, tape.constant(x), 2);
    CHECK(tape.shape(a) == Shape{1, 1, 2, 2});
    CHECK(tape.value(a)[0] == doctest::Approx(3.0));
    CHECK(tape.value(a)[1] == doctest::Approx(4.5));
    CHECK(tape.value(a)[2] == doctest::Approx(7.5));
    CHECK(tape.value(a)[3] == doctest::Approx(9.0));
    CHECK(tape.value(m)[0] == 5.0);
    CHECK(tape.value(m)[3] == 9.0);

    std::mt19937_64 rng(4);
    for (int rate : {2, 4}) {
        auto fa = [rate](Tape<double>& t, const std::vector<Var>& v) { return project(t, ops::avg_pool(t, v[0], rate)); };
        auto fm = [rate](Tape<double>& t, const std::vector<Var>& v) { return project(t, ops::max_pool(t, v[0], rate)); };
        CHECK(max_fd_error(fa, {random_tensor({2, 2, 8, 6}, rng)}) < kGradTol);
        CHECK(max_fd_error(fm, {random_tensor({2, 2, 8, 6}, rng)}) < kGradTol);
    }
}

TEST_CASE("bilinear resize preserves constants and has correct gradients") {
    Tensor<double> c({1, 2, 8, 8}, 0.375);
    Tape<double> tape(false);
    for (auto [h, w] : {std::pair{4, 4}, {2, 2}, {16, 16}, {3, 5}}) {
        Var r = ops::resize_bilinear(tape, tape.constant(c), h, w);
        for (std::size_t i = 0; i < tape.value(r).numel(); ++i) CHECK(tape.value(r)[i] == doctest::Approx(0.375));
    }
    // Half-pixel 2x downsample is a 2x2 box average.
    Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
    Var d = ops::resize_bilinear(tape, tape.constant(x), 1, 1);
    CHECK(tape.value(d)[0] == doctest::Approx(2.5));

    std::mt19937_64 rng(5);
    for (auto [h, w] : {std::pair{3, 4}, {12, 10}, {1, 1}}) {
        auto fn = [h, w](Tape<double>& t, const std::vector<Var>& v) {
            return project(t, ops::resize_bilinear(t, v[0], h, w));
        };
        CHECK(max_fd_error(fn, {random_tensor({1, 2, 6, 5}, rng)}) < kGradTol);
    }
}

TEST_CASE("elementwise ops and activations") {
    std::mt19937_64 rng(6);
    auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
        Var s = ops::sigmoid(t, v[0]);
        Var g = ops::gelu(t, v[1]);
        Var r = ops::relu(t, v[2]);
        Var m = ops::mul(t, ops::add(t, s, g), ops::sub(t, r, v[0]));
        return project(t, m);
    };
    CHECK(max_fd_error(fn, {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng),
                            random_tensor({1, 2, 3, 3}, rng)}) < kGradTol);

    Tape<double> tape(false);
    Var z = tape.constant(Tensor<double>({1, 1, 1, 3}, {-1.0, 0.0, 1.0}));
    CHECK(tape.value(ops::gelu(tape, z))[2] == doctest::Approx(0.8413447460685429));
    CHECK(tape.value(ops::sigmoid(tape, z))[1] == 0.5);
}

TEST_CASE("concat and slice route gradients to the right channels") {
    std::mt19937_64 rng(7);
    auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
        Var c = ops::concat_channels(t, {v[0], v[1]});
        Var s = ops::slice_channels(t, c, 1, 3);
        return project(t, s);
    };
    CHECK(max_fd_error(fn, {random_tensor({2, 2, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)}) < kGradTol);
    Tape<double> tape(false);
    Var x = tape.constant(Tensor<double>({1, 2, 2, 2}));
    CHECK_THROWS_AS(ops::slice_channels(tape, x, 1, 2), ShapeError);
    Var y = tape.constant(Tensor<double>({1, 2, 3, 2}));
    CHECK_THROWS_AS(ops::concat_channels(tape, {x, y}), ShapeError);
}

TEST_CASE("batch norm in training and evaluation mode") {
    std::mt19937_64 rng(8);
    auto train_fn = [](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::batch_norm<double>(t, v[0], v[1], v[2], true, nullptr, nullptr, 1e-5, nullptr));
    };
    CHECK(max_fd_error(train_fn, {random_tensor({2, 3, 3, 4}, rng), random_tensor({3}, rng),
                                  random_tensor({3}, rng)}) < 1e-5);

    Tensor<double> rm({3}, {0.1, -0.2, 0.3}), rv({3}, {1.0, 2.0, 0.5});
    auto eval_fn = [&](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::batch_norm<double>(t, v[0], v[1], v[2], false, &rm, &rv, 1e-5, nullptr));
    };
    CHECK(max_fd_error(eval_fn, {random_tensor({2, 3, 3, 4}, rng), random_tensor({3}, rng),
                                 random_tensor({3}, rng)}) < kGradTol);

    Tape<double> tape(false);
    ops::BatchStats<double> stats;
    auto x = random_tensor({2, 3, 4, 4}, rng);
    Var y = ops::batch_norm<double>(tape, tape.constant(x), tape.constant(Tensor<double>({3}, 1.0)),
                            tape.constant(Tensor<double>({3}, 0.0)), true, nullptr, nullptr, 0.0, &stats);
    CHECK(stats.count == 32u);
    double mean0 = 0;
    for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 16; ++i) mean0 += tape.value(y).plane(n, 0)[i];
    CHECK(mean0 / 32 == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("scalar reductions") {
    Tape<double> tape(true);
    Var x = tape.leaf(Tensor<double>({1, 1, 2, 2}, {0.5, -0.5, 1.5, -2.5}), "x");
    Var m = ops::mean_abs(tape, x);
    CHECK(tape.value(m)[0] == doctest::Approx(1.25));
    Var s = ops::weighted_sum(tape, {m, ops::sum(tape, x)}, {2.0, 0.5});
    CHECK(tape.value(s)[0] == doctest::Approx(2.5 - 0.5));
    tape.backward(s);
    CHECK(tape.grad(x)[0] == doctest::Approx(2.0 * 0.25 + 0.5));
    CHECK(tape.grad(x)[3] == doctest::Approx(-2.0 * 0.25 + 0.5));
}

TEST_CASE("tape without gradients records no backward work") {
    Tape<float> tape(false);
    Var x = tape.leaf(Tensor<float>({1, 1, 2, 2}, 1.0f), "x");
    Var y = ops::sigmoid(tape, x);
    CHECK_FALSE(tape.requires_grad(y));
}
