// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "dmsr/model.hpp"

namespace dmsr {

template <typename T>
void BasicParameterStore<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
    if (tensors_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    tensors_.emplace(name, std::move(value));
    if (!trainable) buffers_.insert(name);
}

template <typename T>
Tensor<T>& BasicParameterStore<T>::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("parameter store has no tensor '" + name + "'");
    return it->second;
}

template <typename T>
const Tensor<T>& BasicParameterStore<T>::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("parameter store has no tensor '" + name + "'");
    return it->second;
}

template <typename T>
std::size_t BasicParameterStore<T>::trainable_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_)
        if (trainable(name)) n += t.numel();
    return n;
}

template <typename T>
bool BasicParameterStore<T>::operator==(const BasicParameterStore& o) const {
    if (buffers_ != o.buffers_ || tensors_.size() != o.tensors_.size()) return false;
    for (const auto& [name, t] : tensors_) {
        auto it = o.tensors_.find(name);
        if (it == o.tensors_.end() || it->second.shape() != t.shape()) return false;
        // Bitwise comparison so that NaN payloads and signed zeros count.
        if (!std::equal(t.storage().begin(), t.storage().end(), it->second.storage().begin(),
                        [](T a, T b) { return std::memcmp(&a, &b, sizeof(T)) == 0; }))
            return false;
    }
    return true;
}

template class BasicParameterStore<float>;
template class BasicParameterStore<double>;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool is_head(const std::string& name) { return name.rfind("head", 0) == 0; }

std::size_t conv_count(std::size_t cout, std::size_t cin, std::size_t k) { return cout * (cin * k * k + 1); }

}  // namespace

ParameterStore init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
    ParameterStore store;
    model::declare_parameters(cfg, [&](const std::string& name, const Shape& shape, model::TensorKind kind) {
        Tensor<float> t(shape);
        using K = model::TensorKind;
        switch (kind) {
            case K::ConvWeight:
            case K::ResidualWeight: {
                std::mt19937_64 rng(splitmix64(seed ^ fnv1a(name)));
                const double fan_in = static_cast<double>(shape[1]) * shape[2] * shape[3];
                const double gain = kind == K::ResidualWeight ? kResidualInitGain : 1.0;
                std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
                for (auto& v : t.storage()) v = static_cast<float>(dist(rng));
                break;
            }
            case K::BnScale:
            case K::BnVar:
                t.fill(1.0f);
                break;
            case K::HeadWeight:
            case K::Bias:
            case K::BnShift:
            case K::BnMean:
                break;
        }
        store.add(name, std::move(t), kind != K::BnMean && kind != K::BnVar);
    });
    return store;
}

std::size_t param_count(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t nb = cfg.fdsm_kernels.size();
    const std::size_t nr = cfg.mpsrm_pool_rates.size();

    auto spga = [&](std::size_t c) {
        const std::size_t r = std::max<std::size_t>(1, c / 4);
        return conv_count(r, c, 1) + conv_count(c, 2 * r, 7) + conv_count(r, c, 1) + conv_count(r, 1, 3) +
               conv_count(c, r, 1) + conv_count(c, cfg.spga_skip_enabled ? 2 * c : c, 7);
    };
    auto mpsrm = [&](std::size_t c) {
        return (cfg.spga_enabled ? nr * spga(c) : 0) + (cfg.mpsrm_tail_conv_enabled ? conv_count(c, c, 3) : 0);
    };
    auto fdsm = [&](std::size_t c) {
        std::size_t n = conv_count(nb * c, c, 1) + conv_count(c, nb * c, 1);
        if (cfg.fdsm_multiconv_enabled) {
            for (int k : cfg.fdsm_kernels) n += conv_count(c, c, k) + conv_count(c, c, 1);
        } else {
            n += conv_count(c, c, 3) + conv_count(c, c, 1);
        }
        if (cfg.fdsm_fft_enabled && cfg.fdsm_modulation_pw_enabled) n += conv_count(2 * nb * c, 2 * nb * c, 1) + 4 * nb * c;
        return n;
    };
    auto stage = [&](std::size_t c, int units) { return units * (mpsrm(c) + fdsm(c)); };
    auto inject = [&](std::size_t c0, std::size_t c) {
        return conv_count(c0, 3, 3) + conv_count(c0, c0, 3) + conv_count(c, c0, 3) + conv_count(c, 2 * c, 1);
    };

    const std::size_t c0 = cfg.base_channels, c1 = 2 * c0, c2 = 4 * c0;
    const auto& n = cfg.blocks_per_stage;
    std::size_t total = conv_count(c0, 3, 3);
    total += stage(c0, n[0]) + stage(c1, n[1]) + stage(c2, n[2]) + stage(c2, n[3]) + stage(c1, n[4]) + stage(c0, n[5]);
    total += conv_count(c1, c0, 3) + conv_count(c2, c1, 3);  // strided downsampling
    total += conv_count(c1, c2, 3) + conv_count(c0, c1, 3);  // transposed upsampling, same count
    total += conv_count(c1, 2 * c1, 1) + conv_count(c0, 2 * c0, 1);
    total += conv_count(3, c2, 3) + conv_count(3, c1, 3) + conv_count(3, c0, 3);
    if (cfg.num_input_scales >= 2) total += inject(c0, c1);
    if (cfg.num_input_scales >= 3) total += inject(c0, c2);
    return total;
}

template <typename T>
void zero_output_heads(BasicParameterStore<T>& store) {
    for (auto& [name, t] : store.tensors())
        if (is_head(name)) t.fill(T(0));
}

template <typename T>
void zero_residual_branches(BasicParameterStore<T>& store) {
    for (auto& [name, t] : store.tensors()) {
        if (is_head(name) || name.find(".mpsrm.tail.") != std::string::npos ||
            name.find(".fdsm.out.") != std::string::npos)
            t.fill(T(0));
    }
}

template void zero_output_heads<float>(BasicParameterStore<float>&);
template void zero_output_heads<double>(BasicParameterStore<double>&);
template void zero_residual_branches<float>(BasicParameterStore<float>&);
template void zero_residual_branches<double>(BasicParameterStore<double>&);

}  // namespace dmsr
