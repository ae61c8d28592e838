// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Real 2-D discrete Fourier transform over the spatial axes of NCHW tensors.
//
// Forward transform is unnormalized and returns the half spectrum
// (W/2 + 1 columns). The inverse carries the 1/(H*W) factor and, like every
// c2r transform, ignores the imaginary parts of the self-conjugate columns
// (DC, and Nyquist for even W). Both directions are dense matrix products
// against cached cosine/sine bases, which makes the adjoints exact.

#pragma once

#include "dmsr/autograd.hpp"

namespace dmsr {

struct SpectralPair {
    Var real;  // N×C×H×(W/2+1)
    Var imag;
};

namespace ops {

// Spectrum stacked along channels as [real planes | imaginary planes],
// N×2C×H×(W/2+1).
template <typename T>
Var rfft2_stacked(Tape<T>& tape, Var x);
template <typename T>
Var irfft2_stacked(Tape<T>& tape, Var spectrum, int width);

template <typename T>
SpectralPair rfft2(Tape<T>& tape, Var x);

// `width` is the spatial width of the signal the spectrum came from.
template <typename T>
Var irfft2(Tape<T>& tape, const SpectralPair& spectrum, int width);

}  // namespace ops

// Non-recording helpers on plain tensors.
template <typename T>
void rfft2(const Tensor<T>& x, Tensor<T>& real, Tensor<T>& imag);
template <typename T>
Tensor<T> irfft2(const Tensor<T>& real, const Tensor<T>& imag, int width);

}  // namespace dmsr
