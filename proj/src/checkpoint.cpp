// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "dmsr/model.hpp"

namespace fs = std::filesystem;

namespace dmsr {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "dmsr-checkpoint";
constexpr int kVersion = 1;

std::string fnv1a_hex(const std::vector<char>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : bytes) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void append_le(std::vector<char>& out, const Tensor<float>& t) {
    const std::size_t start = out.size();
    out.resize(start + t.numel() * 4);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(t[i]);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(out.data() + start + i * 4, &bits, 4);
    }
}

Tensor<float> read_le(const std::vector<char>& in, std::size_t offset, const Shape& shape) {
    Tensor<float> t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, in.data() + offset + i * 4, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        t[i] = std::bit_cast<float>(bits);
    }
    return t;
}

}  // namespace

void save_checkpoint(const std::string& dir, const ModelConfig& cfg, const ParameterStore& params,
                     const AdamState& adam, std::int64_t step) {
    std::map<std::string, std::pair<const Tensor<float>*, bool>> all;
    for (const auto& [name, t] : params.tensors()) all[name] = {&t, params.trainable(name)};
    for (const auto& [name, t] : adam.m) all["adam.m/" + name] = {&t, false};
    for (const auto& [name, t] : adam.v) all["adam.v/" + name] = {&t, false};

    std::vector<char> bytes;
    json tensors = json::array();
    for (const auto& [name, entry] : all) {
        tensors.push_back(json{{"name", name},
                               {"shape", entry.first->shape()},
                               {"dtype", "float32"},
                               {"offset", bytes.size()},
                               {"trainable", entry.second}});
        append_le(bytes, *entry.first);
    }
    json manifest{{"format", kFormat},
                  {"version", kVersion},
                  {"config", to_json(cfg)},
                  {"step", step},
                  {"adam_t", adam.t},
                  {"tensors", tensors},
                  {"weights_bytes", bytes.size()},
                  {"weights_fnv1a", fnv1a_hex(bytes)}};

    fs::create_directories(dir);
    {
        std::ofstream w(fs::path(dir) / "weights.bin", std::ios::binary | std::ios::trunc);
        w.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!w) throw std::runtime_error("cannot write " + (fs::path(dir) / "weights.bin").string());
    }
    std::ofstream m(fs::path(dir) / "manifest.json", std::ios::trunc);
    m << manifest.dump(2) << "\n";
    if (!m) throw std::runtime_error("cannot write " + (fs::path(dir) / "manifest.json").string());
}

Checkpoint load_checkpoint(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json", wpath = fs::path(dir) / "weights.bin";
    if (!fs::exists(mpath)) throw CheckpointError("checkpoint " + dir + ": missing manifest.json");
    if (!fs::exists(wpath)) throw CheckpointError("checkpoint " + dir + ": missing weights.bin");

    json manifest;
    try {
        std::ifstream in(mpath);
        in >> manifest;
    } catch (const json::exception& e) {
        throw CheckpointError("checkpoint " + dir + ": unreadable manifest: " + e.what());
    }
    std::ifstream win(wpath, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(win)), std::istreambuf_iterator<char>());

    Checkpoint ck;
    std::map<std::string, Shape> declared;
    try {
        if (manifest.at("format") != kFormat || manifest.at("version") != kVersion) {
            throw CheckpointError("checkpoint " + dir + ": unsupported format or version");
        }
        ck.model = model_config_from_json(manifest.at("config"));
        ck.step = manifest.at("step").get<std::int64_t>();
        ck.adam.t = manifest.at("adam_t").get<std::int64_t>();
        const auto expected = manifest.at("weights_bytes").get<std::size_t>();
        if (bytes.size() != expected) {
            throw CheckpointError("checkpoint " + dir + ": weights.bin has " + std::to_string(bytes.size()) +
                                  " bytes, manifest expects " + std::to_string(expected) + " (truncated or padded)");
        }
        if (fnv1a_hex(bytes) != manifest.at("weights_fnv1a").get<std::string>()) {
            throw CheckpointError("checkpoint " + dir + ": weights.bin checksum mismatch");
        }
        model::declare_parameters(ck.model, [&](const std::string& name, const Shape& shape, model::TensorKind) {
            declared[name] = shape;
        });

        std::size_t cursor = 0;
        std::string prev;
        for (const auto& e : manifest.at("tensors")) {
            const auto name = e.at("name").get<std::string>();
            const auto shape = e.at("shape").get<Shape>();
            const auto offset = e.at("offset").get<std::size_t>();
            if (e.at("dtype") != "float32") throw CheckpointError("tensor '" + name + "': unsupported dtype");
            if (!prev.empty() && name <= prev) throw CheckpointError("tensor '" + name + "': names out of order");
            prev = name;
            std::string base = name;
            if (name.rfind("adam.m/", 0) == 0 || name.rfind("adam.v/", 0) == 0) base = name.substr(7);
            auto it = declared.find(base);
            if (it == declared.end()) throw CheckpointError("tensor '" + name + "' is not part of the configured model");
            if (it->second != shape) {
                throw CheckpointError("shape mismatch for tensor '" + name + "': manifest " + shape_str(shape) +
                                      ", model " + shape_str(it->second));
            }
            const std::size_t nbytes = shape_numel(shape) * 4;
            if (offset != cursor || offset + nbytes > bytes.size()) {
                throw CheckpointError("tensor '" + name + "': offset " + std::to_string(offset) +
                                      " inconsistent with weights.bin layout");
            }
            cursor += nbytes;
            Tensor<float> t = read_le(bytes, offset, shape);
            if (!t.all_finite()) throw CheckpointError("tensor '" + name + "' contains non-finite values");
            if (name.rfind("adam.m/", 0) == 0) {
                ck.adam.m.emplace(base, std::move(t));
            } else if (name.rfind("adam.v/", 0) == 0) {
                ck.adam.v.emplace(base, std::move(t));
            } else {
                ck.params.add(name, std::move(t), e.at("trainable").get<bool>());
            }
        }
        if (cursor != bytes.size()) throw CheckpointError("checkpoint " + dir + ": trailing bytes in weights.bin");
    } catch (const json::exception& e) {
        throw CheckpointError("checkpoint " + dir + ": malformed manifest: " + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError("checkpoint " + dir + ": invalid model config: " + e.what());
    }
    for (const auto& [name, shape] : declared) {
        if (!ck.params.contains(name)) throw CheckpointError("checkpoint " + dir + ": missing tensor '" + name + "'");
    }
    return ck;
}

}  // namespace dmsr
