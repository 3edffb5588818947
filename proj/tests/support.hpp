#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "facepose/autograd/var.hpp"
#include "facepose/engine/config.hpp"
#include "facepose/pose/types.hpp"

namespace facepose::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("facepose-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Random valid face68 sequence: arbitrary float coordinates and confidences
/// in [0,1], random length, fps and canvas.
inline pose::PoseSequence random_sequence(std::mt19937_64& rng) {
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::uniform_int_distribution<int> frames(1, 12), canvas(8, 1024);
    const double rates[] = {1.0, 12.5, 24.0, 25.0, 29.97, 30.0, 59.94, 1.0 / 3.0};
    pose::PoseSequence seq;
    seq.fps = rates[std::uniform_int_distribution<int>(0, 7)(rng)];
    seq.width = canvas(rng);
    seq.height = canvas(rng);
    const int n = frames(rng);
    for (int f = 0; f < n; ++f) {
        pose::PoseFrame frame;
        for (int k = 0; k < pose::kFace68Count; ++k) frame.keypoints.push_back({unit(rng), unit(rng), unit(rng)});
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

/// Small double-precision-friendly config: 16×16 images, factor-4 lossless latent.
inline engine::EngineConfig tiny_config() {
    auto cfg = engine::EngineConfig::toy();
    cfg.image_size = 16;
    cfg.clip_len = 3;
    cfg.base_channels = 8;
    cfg.attn_dim = 8;
    cfg.embed_dim = 32;
    return cfg;
}

/// Relative error used by all gradient checks: |a - n| / max(|a|, |n|). When
/// both magnitudes are below `floor` the gradient is effectively zero and the
/// absolute difference is reported instead.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double diff = std::abs(analytic - numeric);
    return scale < floor ? diff : diff / scale;
}

/// Central-difference check of `loss` w.r.t. up to `probes` entries of each
/// parameter. Returns the worst relative error seen.
inline double gradient_check(const std::function<ag::Var<double>()>& loss, const std::vector<ag::Var<double>>& params, int probes = 4,
                             double h = 1e-6) {
    for (auto p : params) p.zero_grad();
    loss().backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.push_back(p.grad().empty() ? std::vector<double>(p.size(), 0.0) : p.grad());
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k];
        const std::size_t n = p.size();
        for (int j = 0; j < probes && static_cast<std::size_t>(j) < n; ++j) {
            const std::size_t i = (static_cast<std::size_t>(j) * 7919u + 13u) % n;
            const double old = p.mutable_value()[i];
            p.mutable_value()[i] = old + h;
            const double lp = loss().item();
            p.mutable_value()[i] = old - h;
            const double lm = loss().item();
            p.mutable_value()[i] = old;
            worst = std::max(worst, relative_error(analytic[k][i], (lp - lm) / (2.0 * h)));
        }
    }
    return worst;
}

} // namespace facepose::testing
