// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dmsr/checkpoint.hpp"
#include "dmsr/config.hpp"
#include "dmsr/data.hpp"
#include "dmsr/grad_check.hpp"
#include "dmsr/inference.hpp"
#include "dmsr/train.hpp"

namespace fs = std::filesystem;

namespace dmsr {

using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
    int code;
    std::string kind;
    CliError(int c, std::string k, const std::string& msg) : std::runtime_error(msg), code(c), kind(std::move(k)) {}
};

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) throw CliError(kExitMissingFile, "missing_file", std::string(what) + " not found: " + path);
}

RunConfig resolve_config(const std::string& path) {
    require_file(path, "config file");
    RunConfig cfg = load_run_config(path);
    if (const char* s = std::getenv("DMSR_SEED"); s && *s) {
        try {
            std::size_t used = 0;
            cfg.train.seed = std::stoull(s, &used);
            if (s[used] != '\0') throw std::invalid_argument(s);
        } catch (const std::exception&) {
            throw ConfigError(std::string("DMSR_SEED is not an unsigned integer: ") + s);
        }
    }
    return cfg;
}

void print_config(std::ostream& out, const json& resolved) {
    out << "config: " << resolved.dump() << "\n";
    out << "config_hash: " << config_hash(resolved) << "\n";
}

Checkpoint load_matching_checkpoint(const std::string& dir, const RunConfig& cfg) {
    require_file(dir, "checkpoint directory");
    Checkpoint ck = load_checkpoint(dir);
    if (!(ck.model == cfg.model)) {
        throw ConfigError("checkpoint model config differs from the run config model section");
    }
    return ck;
}

int cmd_train(const std::string& config_path, std::ostream& out) {
    const RunConfig cfg = resolve_config(config_path);
    print_config(out, to_json(cfg));
    require_file(cfg.data_root, "data_root");
    const auto pairs = scan_pair_dataset(cfg.data_root);
    if (pairs.empty()) throw std::runtime_error("no training pairs under " + cfg.data_root);
    const auto data = load_pairs(pairs);
    out << "pairs: " << data.size() << " steps_per_epoch: " << steps_per_epoch(data.size(), cfg.train.batch)
        << "\n";

    fs::create_directories(cfg.out_dir);
    std::ofstream csv(fs::path(cfg.out_dir) / "train_log.csv", std::ios::trunc);
    TrainState state{init_parameters(cfg.model, cfg.train.seed), {}, 0};
    TrainHooks hooks;
    hooks.csv = &csv;
    hooks.on_checkpoint = [&](const TrainState& s) {
        const auto dir = fs::path(cfg.out_dir) / "checkpoints" / ("step_" + std::to_string(s.step));
        save_checkpoint(dir.string(), cfg.model, s.params, s.adam, s.step);
    };
    hooks.on_step = [&](std::int64_t step, const LossReport& r) {
        out << "step " << step << " loss " << r.total << "\n";
    };
    train_loop(cfg.model, cfg.train, data, state, hooks);
    const auto final_dir = fs::path(cfg.out_dir) / "checkpoint";
    save_checkpoint(final_dir.string(), cfg.model, state.params, state.adam, state.step);
    out << "checkpoint: " << final_dir.string() << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt, std::ostream& out) {
    const RunConfig cfg = resolve_config(config_path);
    const json resolved = to_json(cfg);
    print_config(out, resolved);
    require_file(cfg.data_root, "data_root");
    const Checkpoint ck = load_matching_checkpoint(ckpt, cfg);
    const EvalReport r =
        evaluate_dataset(ck.params, cfg.model, cfg.data_root, cfg.tile, cfg.overlap, cfg.out_dir, config_hash(resolved));
    const json j = to_json(r);
    out << "images: " << r.per_image.size() << " mean_psnr_db: " << j["mean_psnr_db"].dump()
        << " mean_ssim: " << j["mean_ssim"].dump() << "\n";
    return kExitOk;
}

int cmd_infer(const std::string& config_path, const std::string& ckpt, const std::string& input,
              const std::string& output, std::ostream& out) {
    const RunConfig cfg = resolve_config(config_path);
    print_config(out, to_json(cfg));
    require_file(input, "input image");
    const Checkpoint ck = load_matching_checkpoint(ckpt, cfg);
    const Image img = load_png(input);
    save_png(output, sliding_window_infer(ck.params, cfg.model, img, cfg.tile, cfg.overlap));
    out << "wrote: " << output << "\n";
    return kExitOk;
}

int cmd_synth(const std::string& root, int count, std::uint64_t seed, int size, std::ostream& out) {
    const json resolved{{"synth_data", {{"out", root}, {"count", count}, {"seed", seed}, {"size", size}}}};
    print_config(out, resolved);
    if (count < 0) throw CliError(kExitUsage, "usage", "--count must be >= 0");
    if (size < 16 || size % 4 != 0) throw CliError(kExitUsage, "usage", "--size must be >= 16 and divisible by 4");
    write_synthetic_dataset(root, count, seed, size);
    out << "wrote: " << count << " pairs to " << root << "\n";
    return kExitOk;
}

int cmd_grad_check(const std::string& config_path, std::ostream& out) {
    const RunConfig cfg = resolve_config(config_path);
    print_config(out, to_json(cfg));
    GradCheckOptions opt;
    opt.seed = cfg.train.seed;
    opt.lambda_freq = cfg.train.lambda_freq;
    const auto t0 = std::chrono::steady_clock::now();
    const GradCheckReport r = grad_check(cfg.model, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << "max_rel_err: " << r.max_rel_err << " tensors: " << r.tensors_checked << " coords: " << r.coords_checked
        << " worst: " << r.worst.tensor << "[" << r.worst.index << "] seconds: " << secs << "\n";
    for (const auto& f : r.failures) {
        out << "FAIL " << f.tensor << "[" << f.index << "] analytic " << f.analytic << " numeric " << f.numeric
            << " rel_err " << f.rel_err << "\n";
    }
    if (!r.passed()) throw std::runtime_error("gradient check failed on " + std::to_string(r.failures.size()) + " coordinates");
    return kExitOk;
}

void report_error(std::ostream& err, int code, const std::string& kind, const std::string& message) {
    err << json{{"error", kind}, {"code", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"dmsr: dual-domain multi-scale image deraining", "dmsr"};
    app.require_subcommand(1);

    std::string config, ckpt, input, output, synth_out;
    int count = 0, size = 64;
    std::uint64_t seed = 0;

    auto* train = app.add_subcommand("train", "train a model from a run config");
    train->add_option("--config", config, "run config JSON")->required();
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on data_root");
    eval->add_option("--config", config, "run config JSON")->required();
    eval->add_option("--ckpt", ckpt, "checkpoint directory")->required();
    auto* infer = app.add_subcommand("infer", "derain one PNG image");
    infer->add_option("--config", config, "run config JSON")->required();
    infer->add_option("--ckpt", ckpt, "checkpoint directory")->required();
    infer->add_option("--input", input, "input PNG")->required();
    infer->add_option("--output", output, "output PNG")->required();
    auto* synth = app.add_subcommand("synth-data", "write a synthetic rainy/clean dataset");
    synth->add_option("--out", synth_out, "dataset root")->required();
    synth->add_option("--count", count, "number of pairs")->required();
    synth->add_option("--seed", seed, "generator seed")->required();
    synth->add_option("--size", size, "image side length");
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient check");
    gc->add_option("--config", config, "run config JSON")->required();

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << app.help();
        report_error(err, kExitUsage, "usage", e.what());
        return kExitUsage;
    }

    try {
        if (*train) return cmd_train(config, out);
        if (*eval) return cmd_eval(config, ckpt, out);
        if (*infer) return cmd_infer(config, ckpt, input, output, out);
        if (*synth) return cmd_synth(synth_out, count, seed, size, out);
        if (*gc) return cmd_grad_check(config, out);
    } catch (const CliError& e) {
        if (e.code == kExitUsage) err << app.help();
        report_error(err, e.code, e.kind, e.what());
        return e.code;
    } catch (const ConfigError& e) {
        report_error(err, kExitInvalidConfig, "invalid_config", e.what());
        return kExitInvalidConfig;
    } catch (const std::exception& e) {
        report_error(err, kExitFailure, "runtime", e.what());
        return kExitFailure;
    }
    err << app.help();
    report_error(err, kExitUsage, "usage", "no subcommand selected");
    return kExitUsage;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace dmsr
