// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <complex>
#include <numbers>
#include <random>

#include "dmsr/spectral.hpp"
#include "fd_oracle.hpp"

using namespace dmsr;
using dmsr::test::max_fd_error;
using dmsr::test::project;
using dmsr::test::random_tensor;

namespace {

// Naive O(H^2 W^2) DFT of one plane, half spectrum.
std::vector<std::complex<double>> naive_rfft2(const double* x, int H, int W) {
    const int F = W / 2 + 1;
    std::vector<std::complex<double>> out(static_cast<std::size_t>(H) * F);
    for (int u = 0; u < H; ++u)
        for (int v = 0; v < F; ++v) {
            std::complex<double> acc = 0;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const double a = -2 * std::numbers::pi * (double(u) * i / H + double(v) * j / W);
                    acc += x[i * W + j] * std::complex<double>(std::cos(a), std::sin(a));
                }
            out[u * F + v] = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("rfft2 matches the naive DFT on even and odd sizes") {
    std::mt19937_64 rng(11);
    for (auto [H, W] : {std::pair{4, 6}, {5, 7}, {8, 8}, {1, 3}}) {
        const auto x = random_tensor({2, 2, H, W}, rng);
        Tensor<double> re, im;
        rfft2(x, re, im);
        const int F = W / 2 + 1;
        REQUIRE(re.shape() == Shape{2, 2, H, F});
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 2; ++c) {
                const auto ref = naive_rfft2(x.plane(n, c), H, W);
                for (int i = 0; i < H * F; ++i) {
                    CHECK(re.plane(n, c)[i] == doctest::Approx(ref[i].real()).epsilon(1e-10));
                    CHECK(im.plane(n, c)[i] == doctest::Approx(ref[i].imag()).epsilon(1e-10));
                }
            }
    }
}

TEST_CASE("irfft2 inverts rfft2") {
    std::mt19937_64 rng(12);
    for (auto [H, W] : {std::pair{8, 8}, {6, 9}, {16, 32}}) {
        const auto x = random_tensor({1, 3, H, W}, rng);
        Tensor<double> re, im;
        rfft2(x, re, im);
        const auto back = irfft2(re, im, W);
        double worst = 0;
        for (std::size_t i = 0; i < x.numel(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("constant signal has a DC-only spectrum") {
    Tensor<float> x({1, 1, 8, 8}, 0.25f);
    Tensor<float> re, im;
    rfft2(x, re, im);
    CHECK(re[0] == doctest::Approx(16.0f));
    for (std::size_t i = 1; i < re.numel(); ++i) CHECK(std::abs(re[i]) < 1e-5f);
    for (std::size_t i = 0; i < im.numel(); ++i) CHECK(std::abs(im[i]) < 1e-5f);
}

TEST_CASE("spectral op gradients match finite differences") {
    std::mt19937_64 rng(13);
    auto fwd = [](Tape<double>& t, const std::vector<Var>& v) {
        SpectralPair s = ops::rfft2(t, v[0]);
        return ops::weighted_sum(t, {project(t, s.real, 1), project(t, s.imag, 2)}, {1.0, 1.0});
    };
    CHECK(max_fd_error(fwd, {random_tensor({1, 2, 4, 6}, rng)}) < 1e-6);
    CHECK(max_fd_error(fwd, {random_tensor({1, 1, 5, 5}, rng)}) < 1e-6);

    // Arbitrary (non-hermitian) spectra, as produced by learned modulation.
    auto inv = [](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::irfft2(t, SpectralPair{v[0], v[1]}, 6));
    };
    CHECK(max_fd_error(inv, {random_tensor({1, 2, 4, 4}, rng), random_tensor({1, 2, 4, 4}, rng)}) < 1e-6);
    auto inv_odd = [](Tape<double>& t, const std::vector<Var>& v) {
        return project(t, ops::irfft2(t, SpectralPair{v[0], v[1]}, 5));
    };
    CHECK(max_fd_error(inv_odd, {random_tensor({1, 1, 3, 3}, rng), random_tensor({1, 1, 3, 3}, rng)}) < 1e-6);
}

TEST_CASE("irfft2 rejects inconsistent spectrum widths and non-finite spectra") {
    Tape<float> tape(false);
    Var re = tape.constant(Tensor<float>({1, 1, 4, 3}));
    Var im = tape.constant(Tensor<float>({1, 1, 4, 3}));
    CHECK_THROWS_AS(ops::irfft2(tape, SpectralPair{re, im}, 8), ShapeError);
    Tensor<float> bad({1, 1, 4, 3});
    bad[2] = std::numeric_limits<float>::quiet_NaN();
    Var nre = tape.constant(bad);
    CHECK_THROWS_AS(ops::irfft2(tape, SpectralPair{nre, im}, 4), std::domain_error);
}
