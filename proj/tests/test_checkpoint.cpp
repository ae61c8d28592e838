// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dmsr/checkpoint.hpp"
#include "model_helpers.hpp"
#include "temp_dir.hpp"

using namespace dmsr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Saved {
    test::TempDir dir;
    ModelConfig cfg = test::tiny_config(4);
    ParameterStore params;
    AdamState adam;
    std::string path;
    Saved() {
        params = init_parameters(cfg, 3);
        test::randomize(params, 4);
        TrainConfig tc;
        tc.batch = 1;
        tc.patch = 16;
        const auto data = make_synthetic_pairs(1, 5, 16);
        train_step(cfg, tc, params, adam, training_batch(data, tc, 0), 1e-3);
        path = (dir.path / "ckpt").string();
        save_checkpoint(path, cfg, params, adam, 17);
    }
    json manifest() const {
        std::ifstream in(fs::path(path) / "manifest.json");
        return json::parse(in);
    }
    void write_manifest(const json& j) const { std::ofstream(fs::path(path) / "manifest.json") << j.dump(2); }
};

std::string load_error(const std::string& path) {
    try {
        load_checkpoint(path);
    } catch (const CheckpointError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise") {
    Saved s;
    const Checkpoint ck = load_checkpoint(s.path);
    CHECK(ck.model == s.cfg);
    CHECK(ck.step == 17);
    CHECK(ck.params == s.params);
    CHECK(ck.adam == s.adam);
    CHECK(ck.adam.t == 1);
    for (const auto& [name, t] : s.params.tensors()) CHECK(ck.params.trainable(name) == s.params.trainable(name));

    // Saving the loaded state reproduces the same bytes.
    const std::string again = (s.dir.path / "again").string();
    save_checkpoint(again, ck.model, ck.params, ck.adam, ck.step);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(slurp(fs::path(again) / "weights.bin") == slurp(fs::path(s.path) / "weights.bin"));
    CHECK(slurp(fs::path(again) / "manifest.json") == slurp(fs::path(s.path) / "manifest.json"));
}

TEST_CASE("truncated weights are detected") {
    Saved s;
    const auto w = fs::path(s.path) / "weights.bin";
    fs::resize_file(w, fs::file_size(w) - 4);
    CHECK_FALSE(load_error(s.path).empty());
}

TEST_CASE("flipped weight byte is detected") {
    Saved s;
    std::fstream f(fs::path(s.path) / "weights.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(123);
    char c = 0;
    f.read(&c, 1);
    c = static_cast<char>(c ^ 0x10);
    f.seekp(123);
    f.write(&c, 1);
    f.close();
    CHECK(load_error(s.path).find("checksum") != std::string::npos);
}

TEST_CASE("edited manifest shape names the tensor") {
    Saved s;
    json m = s.manifest();
    std::string victim;
    for (auto& t : m["tensors"]) {
        if (t["name"] == "enc1.unit0.fdsm.pw_in.weight") {
            victim = t["name"];
            t["shape"][0] = t["shape"][0].get<int>() + 1;
        }
    }
    REQUIRE_FALSE(victim.empty());
    s.write_manifest(m);
    const std::string err = load_error(s.path);
    CHECK(err.find("shape mismatch") != std::string::npos);
    CHECK(err.find(victim) != std::string::npos);
}

TEST_CASE("manifest inconsistencies are rejected") {
    SUBCASE("missing tensor entry") {
        Saved s;
        json m = s.manifest();
        m["tensors"].erase(m["tensors"].begin() + 3);
        s.write_manifest(m);
        CHECK_FALSE(load_error(s.path).empty());
    }
    SUBCASE("bad format tag") {
        Saved s;
        json m = s.manifest();
        m["format"] = "something-else";
        s.write_manifest(m);
        CHECK_FALSE(load_error(s.path).empty());
    }
    SUBCASE("not json") {
        Saved s;
        std::ofstream(fs::path(s.path) / "manifest.json") << "{ nope";
        CHECK_FALSE(load_error(s.path).empty());
    }
    SUBCASE("missing directory") {
        test::TempDir d;
        CHECK_FALSE(load_error((d.path / "absent").string()).empty());
    }
    SUBCASE("extra bytes") {
        Saved s;
        std::ofstream(fs::path(s.path) / "weights.bin", std::ios::app | std::ios::binary) << "xxxx";
        CHECK_FALSE(load_error(s.path).empty());
    }
}
