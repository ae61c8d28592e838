// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "dmsr/config.hpp"
#include "dmsr/tensor.hpp"

namespace dmsr {

// Named tensors of a network, iterated in lexicographic name order.
// Non-trainable buffers (normalization running statistics) live alongside
// the trainable weights so a single store fully determines inference.
template <typename T>
class BasicParameterStore {
public:
    using Map = std::map<std::string, Tensor<T>>;

    void add(const std::string& name, Tensor<T> value, bool trainable = true);

    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    bool trainable(const std::string& name) const { return !buffers_.count(name); }

    Tensor<T>& at(const std::string& name);
    const Tensor<T>& at(const std::string& name) const;

    const Map& tensors() const { return tensors_; }
    Map& tensors() { return tensors_; }
    std::size_t size() const { return tensors_.size(); }

    // Scalar count over trainable tensors only.
    std::size_t trainable_count() const;

    template <typename U>
    BasicParameterStore<U> cast() const {
        BasicParameterStore<U> out;
        for (const auto& [name, t] : tensors_) out.add(name, t.template cast<U>(), trainable(name));
        return out;
    }

    bool operator==(const BasicParameterStore& o) const;

private:
    Map tensors_;
    std::set<std::string> buffers_;
};

using ParameterStore = BasicParameterStore<float>;

inline constexpr double kResidualInitGain = 0.1;

// Kaiming fan-in normal weights, zero biases, zero output heads, unit BN
// scale. The last conv of each residual branch is scaled by kResidualInitGain.
// Every tensor draws from its own stream keyed by (seed, name).
ParameterStore init_parameters(const ModelConfig& cfg, std::uint64_t seed);

// Closed-form trainable-parameter count of the network described by `cfg`.
std::size_t param_count(const ModelConfig& cfg);

// Zeroes the output heads and the last layer of every residual branch
// (MPSRM tail conv, FDSM output projection), making the network the identity.
template <typename T>
void zero_residual_branches(BasicParameterStore<T>& store);

// Zeroes only the three output heads.
template <typename T>
void zero_output_heads(BasicParameterStore<T>& store);

}  // namespace dmsr
