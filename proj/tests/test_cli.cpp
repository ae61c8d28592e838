// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dmsr/checkpoint.hpp"
#include "dmsr/cli.hpp"
#include "dmsr/config.hpp"
#include "dmsr/data.hpp"
#include "model_helpers.hpp"
#include "temp_dir.hpp"

using namespace dmsr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Last stderr line parsed as the machine-readable error record.
json error_record(const Run& r) {
    std::istringstream in(r.err);
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    return json::parse(last);
}

std::string line_with(const std::string& text, const std::string& prefix) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(prefix, 0) == 0) return line;
    return {};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

json tiny_run_config(const fs::path& data, const fs::path& out) {
    RunConfig c;
    c.model = test::tiny_config(4);
    c.train.batch = 2;
    c.train.patch = 16;
    c.train.warmup_epochs = 1;
    c.train.total_epochs = 2;
    c.train.seed = 3;
    c.train.checkpoint_every = 1;
    c.data_root = data.string();
    c.out_dir = out.string();
    c.tile = 16;
    c.overlap = 4;
    return to_json(c);
}

std::string write_config(const fs::path& path, const json& j) {
    std::ofstream(path) << j.dump(2);
    return path.string();
}

}  // namespace

TEST_CASE("cli usage errors exit with code 2") {
    for (const std::vector<std::string>& args :
         {std::vector<std::string>{}, {"explode"}, {"train"}, {"train", "--config", "x.json", "--bogus", "1"},
          {"synth-data", "--out", "x"}}) {
        const Run r = cli(args);
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("Usage") != std::string::npos);
        const json e = error_record(r);
        CHECK(e.at("code") == kExitUsage);
        CHECK(e.at("error") == "usage");
    }
    const Run help = cli({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("grad-check") != std::string::npos);
}

TEST_CASE("cli missing files exit with code 3") {
    test::TempDir dir;
    const Run r = cli({"train", "--config", (dir.path / "nope.json").string()});
    CHECK(r.code == kExitMissingFile);
    CHECK(error_record(r).at("error") == "missing_file");

    const auto cfg = write_config(dir.path / "c.json", tiny_run_config(dir.path / "absent", dir.path / "out"));
    CHECK(cli({"train", "--config", cfg}).code == kExitMissingFile);
    CHECK(cli({"eval", "--config", cfg, "--ckpt", (dir.path / "ck").string()}).code == kExitMissingFile);
}

TEST_CASE("cli invalid configs exit with code 4") {
    test::TempDir dir;
    json j = tiny_run_config(dir.path, dir.path / "out");
    j["train"]["warmup_epochs"] = 9;
    CHECK(cli({"train", "--config", write_config(dir.path / "a.json", j)}).code == kExitInvalidConfig);
    j = tiny_run_config(dir.path, dir.path / "out");
    j["model"]["colour"] = "blue";
    const Run r = cli({"grad-check", "--config", write_config(dir.path / "b.json", j)});
    CHECK(r.code == kExitInvalidConfig);
    CHECK(error_record(r).at("error") == "invalid_config");
    std::ofstream(dir.path / "c.json") << "{ not json";
    CHECK(cli({"train", "--config", (dir.path / "c.json").string()}).code == kExitInvalidConfig);
}

TEST_CASE("synth-data with zero pairs creates the layout") {
    test::TempDir dir;
    const auto root = dir.path / "empty";
    const Run r = cli({"synth-data", "--out", root.string(), "--count", "0", "--seed", "1"});
    CHECK(r.code == kExitOk);
    CHECK(fs::is_directory(root / "rain"));
    CHECK(fs::is_directory(root / "gt"));
    CHECK_FALSE(line_with(r.out, "config: ").empty());
    CHECK_FALSE(line_with(r.out, "config_hash: ").empty());
}

TEST_CASE("grad-check subcommand on the tiny config") {
    test::TempDir dir;
    const auto cfg = write_config(dir.path / "c.json", tiny_run_config(dir.path, dir.path / "out"));
    const Run r = cli({"grad-check", "--config", cfg});
    CHECK(r.code == kExitOk);
    const std::string line = line_with(r.out, "max_rel_err: ");
    REQUIRE_FALSE(line.empty());
    CHECK(std::stod(line.substr(13)) < 1e-4);
}

TEST_CASE("train, eval and infer end to end") {
    test::TempDir dir;
    const auto data = dir.path / "data";
    REQUIRE(cli({"synth-data", "--out", data.string(), "--count", "3", "--seed", "7", "--size", "16"}).code == 0);
    const auto cfg_a = write_config(dir.path / "a.json", tiny_run_config(data, dir.path / "run_a"));
    const auto cfg_b = write_config(dir.path / "b.json", tiny_run_config(data, dir.path / "run_b"));

    const Run ta = cli({"train", "--config", cfg_a});
    REQUIRE(ta.code == kExitOk);
    const Run tb = cli({"train", "--config", cfg_b});
    REQUIRE(tb.code == kExitOk);

    // Two steps per epoch for two epochs; a checkpoint per step plus the final one.
    const auto ck = dir.path / "run_a" / "checkpoint";
    CHECK(load_checkpoint(ck.string()).step == 4);
    CHECK(fs::exists(dir.path / "run_a" / "checkpoints" / "step_2" / "manifest.json"));
    CHECK(fs::exists(dir.path / "run_a" / "checkpoints" / "step_4" / "weights.bin"));
    CHECK(slurp(ck / "weights.bin") == slurp(dir.path / "run_b" / "checkpoint" / "weights.bin"));
    CHECK(slurp(dir.path / "run_a" / "train_log.csv") == slurp(dir.path / "run_b" / "train_log.csv"));

    const Run ev = cli({"eval", "--config", cfg_a, "--ckpt", ck.string()});
    REQUIRE(ev.code == kExitOk);
    const auto report_path = dir.path / "run_a" / "data" / "report.json";
    REQUIRE(fs::exists(report_path));
    std::ifstream in(report_path);
    const json report = json::parse(in);
    CHECK(report.at("per_image").size() == 3);
    CHECK(report.at("config_hash") == line_with(ev.out, "config_hash: ").substr(13));

    const auto out_png = dir.path / "derained.png";
    const Run inf = cli({"infer", "--config", cfg_a, "--ckpt", ck.string(), "--input",
                         (data / "rain" / "00000.png").string(), "--output", out_png.string()});
    REQUIRE(inf.code == kExitOk);
    const Image derained = load_png(out_png.string());
    CHECK(derained.height == 16);
    CHECK(derained.width == 16);

    CHECK(cli({"infer", "--config", cfg_a, "--ckpt", ck.string(), "--input", (dir.path / "no.png").string(),
               "--output", out_png.string()})
              .code == kExitMissingFile);

    // A checkpoint from a different architecture is refused.
    json other = tiny_run_config(data, dir.path / "run_c");
    other["model"]["base_channels"] = 8;
    const Run mismatch = cli({"eval", "--config", write_config(dir.path / "c.json", other), "--ckpt", ck.string()});
    CHECK(mismatch.code == kExitInvalidConfig);
}

TEST_CASE("DMSR_SEED overrides the configured seed") {
    test::TempDir dir;
    const auto cfg = write_config(dir.path / "c.json", tiny_run_config(dir.path, dir.path / "out"));
    ::setenv("DMSR_SEED", "99", 1);
    const Run r = cli({"grad-check", "--config", cfg});
    ::setenv("DMSR_SEED", "x9", 1);
    const Run bad = cli({"grad-check", "--config", cfg});
    ::unsetenv("DMSR_SEED");
    const json printed = json::parse(line_with(r.out, "config: ").substr(8));
    CHECK(printed.at("train").at("seed") == 99);
    CHECK(bad.code == kExitInvalidConfig);
}
