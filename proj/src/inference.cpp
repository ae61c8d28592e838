// Copyright (c) 2026, DMSR contributors
// SPDX-License-Identifier: Apache-2.0

#include "dmsr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "dmsr/data.hpp"
#include "dmsr/metrics.hpp"
#include "dmsr/model.hpp"

namespace fs = std::filesystem;

namespace dmsr {

using nlohmann::json;

namespace {

// Mirror index without repeating the edge sample, periodic for large offsets.
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

int tiles_needed(int extent, int tile, int stride) {
    if (extent <= tile) return 1;
    return (extent - tile + stride - 1) / stride + 1;
}

}  // namespace

Image forward_image(const ParameterStore& params, const ModelConfig& cfg, const Image& img) {
    Tape<float> tape(false);
    model::Context<float> ctx(tape, cfg, params, false);
    Var s[3];
    s[0] = tape.constant(image_to_tensor<float>(img));
    for (int k = 1; k < 3; ++k) {
        s[k] = tape.constant(image_to_tensor<float>(resize_bilinear(img, img.height >> k, img.width >> k)));
    }
    const auto out = model::dmsr_forward(ctx, s[0], s[1], s[2]);
    return tensor_to_image(tape.value(out.full));
}

Image sliding_window_apply(const std::function<Image(const Image&)>& model, const Image& img, int tile, int overlap) {
    if (tile < 16 || tile % 4 != 0) throw std::invalid_argument("sliding window: tile must be >= 16 and divisible by 4");
    if (overlap < 0 || overlap >= tile) throw std::invalid_argument("sliding window: require 0 <= overlap < tile");
    const int H = img.height, W = img.width;
    const int stride = tile - overlap;
    const int ny = tiles_needed(H, tile, stride), nx = tiles_needed(W, tile, stride);
    const int PH = (ny - 1) * stride + tile, PW = (nx - 1) * stride + tile;

    Image padded(PH, PW);
    for (int y = 0; y < PH; ++y)
        for (int x = 0; x < PW; ++x)
            for (int c = 0; c < 3; ++c) padded.at(y, x, c) = img.at(reflect(y, H), reflect(x, W), c);

    Image acc(PH, PW);
    std::vector<int> hits(static_cast<std::size_t>(PH) * PW, 0);
    for (int ty = 0; ty < ny; ++ty) {
        for (int tx = 0; tx < nx; ++tx) {
            const int y0 = ty * stride, x0 = tx * stride;
            const Image out = model(crop(padded, y0, x0, tile, tile));
            if (out.height != tile || out.width != tile) throw ShapeError("sliding window: model changed tile size");
            for (int y = 0; y < tile; ++y)
                for (int x = 0; x < tile; ++x) {
                    for (int c = 0; c < 3; ++c) acc.at(y0 + y, x0 + x, c) += out.at(y, x, c);
                    hits[static_cast<std::size_t>(y0 + y) * PW + x0 + x] += 1;
                }
        }
    }
    Image result(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double n = hits[static_cast<std::size_t>(y) * PW + x];
            for (int c = 0; c < 3; ++c) result.at(y, x, c) = std::clamp(acc.at(y, x, c) / n, 0.0, 1.0);
        }
    return result;
}

Image sliding_window_infer(const ParameterStore& params, const ModelConfig& cfg, const Image& img, int tile,
                           int overlap) {
    return sliding_window_apply([&](const Image& t) { return forward_image(params, cfg, t); }, img, tile, overlap);
}

json to_json(const EvalReport& r) {
    auto num = [](double v) -> json {
        if (std::isnan(v)) return nullptr;
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
    };
    json per = json::array();
    for (const auto& e : r.per_image) per.push_back(json{{"name", e.name}, {"psnr_db", num(e.psnr_db)}, {"ssim", num(e.ssim)}});
    return json{{"dataset", r.dataset},
                {"config_hash", r.config_hash},
                {"per_image", per},
                {"mean_psnr_db", num(r.mean_psnr_db)},
                {"mean_ssim", num(r.mean_ssim)}};
}

EvalReport evaluate_dataset(const std::function<Image(const Image&)>& model, const std::string& root,
                            const std::string& out_dir, const std::string& config_hash) {
    EvalReport report;
    report.dataset = fs::path(root).lexically_normal().filename().string();
    if (report.dataset.empty()) report.dataset = fs::path(root).lexically_normal().parent_path().filename().string();
    report.config_hash = config_hash;
    const auto pairs = scan_pair_dataset(root);
    fs::path dest;
    if (!out_dir.empty()) {
        dest = fs::path(out_dir) / report.dataset;
        fs::create_directories(dest);
    }
    double sum_psnr = 0, sum_ssim = 0;
    for (const auto& p : pairs) {
        const Image rainy = load_png(p.rainy), clean = load_png(p.clean);
        const Image derained = clamp01(model(rainy));
        EvalEntry e{p.name, psnr_y(derained, clean), ssim_y(derained, clean)};
        sum_psnr += e.psnr_db;
        sum_ssim += e.ssim;
        report.per_image.push_back(e);
        if (!dest.empty()) save_png((dest / p.name).string(), derained);
    }
    const double n = static_cast<double>(report.per_image.size());
    report.mean_psnr_db = n > 0 ? sum_psnr / n : std::numeric_limits<double>::quiet_NaN();
    report.mean_ssim = n > 0 ? sum_ssim / n : std::numeric_limits<double>::quiet_NaN();
    if (!dest.empty()) {
        std::ofstream out(dest / "report.json");
        out << to_json(report).dump(2) << "\n";
        if (!out) throw std::runtime_error("cannot write " + (dest / "report.json").string());
    }
    return report;
}

EvalReport evaluate_dataset(const ParameterStore& params, const ModelConfig& cfg, const std::string& root, int tile,
                            int overlap, const std::string& out_dir, const std::string& config_hash) {
    return evaluate_dataset([&](const Image& img) { return sliding_window_infer(params, cfg, img, tile, overlap); },
                            root, out_dir, config_hash);
}

}  // namespace dmsr
