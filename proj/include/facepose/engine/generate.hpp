#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "facepose/conditioning/face_locator.hpp"
#include "facepose/conditioning/motion.hpp"
#include "facepose/engine/model.hpp"
#include "facepose/pose/extract.hpp"
#include "facepose/pose/render.hpp"

namespace facepose::engine {

struct GenerateOptions {
    std::optional<std::uint64_t> seed;  // defaults to config.seed
    pose::RenderStyle style{};
    /// Called after each finished clip with (clip index, clip count).
    std::function<void(std::size_t, std::size_t)> on_clip;
};

struct GenerationResult {
    Frames frames;
    std::vector<LatentVideo> clip_latents;                  // final denoised latents per clip
    std::vector<conditioning::MotionWindow> motion_windows;  // window fed to the Reference Net per clip
    std::vector<std::pair<std::size_t, std::size_t>> clip_ranges;
    conditioning::FaceRegion face;
};

/// Initial noise for clip `index`; a pure function of (seed, index).
inline std::vector<float> clip_noise(std::uint64_t seed, std::size_t index, std::size_t count) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(index),
                      0x9e3779b9u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<float> out(count);
    for (auto& v : out) v = static_cast<float>(dist(rng));
    return out;
}

/// Motion window for the clip starting at `start`: the last n frames generated
/// so far. The first clip (and any shortfall) uses copies of the reference, or
/// black frames when the cold start is configured as zeros.
inline conditioning::MotionWindow motion_window_for(const Frames& generated, std::size_t start, const Image& reference,
                                                    const EngineConfig& config) {
    const auto n = static_cast<std::size_t>(config.n_motion);
    conditioning::MotionWindow w;
    w.source_id = "generated";
    const std::size_t have = std::min(start, n);
    w.start = start - have;
    const Image filler = config.motion_cold_start == ColdStart::Reference ? reference : Image(reference.width, reference.height, 3, 0.0f);
    for (std::size_t i = have; i < n; ++i) w.frames.push_back(filler);
    for (std::size_t i = start - have; i < start; ++i) w.frames.push_back(generated[i]);
    return w;
}

/// Autoregressive clip-by-clip generation: one output frame per pose frame,
/// clips of config.clip_len, each conditioned on the previous clip's tail.
template <class S>
GenerationResult generate_video(const Model<S>& model, const Image& reference_in, const pose::PoseSequence& seq,
                                 const pose::LandmarkDetector& detector, const GenerateOptions& opts = {}) {
    const auto& cfg = model.config();
    if (seq.frames.empty()) fail(ErrorCode::BadConfig, "pose sequence is empty");
    ag::NoGradGuard no_grad;

    const Image reference = resize_bilinear(reference_in, cfg.image_size, cfg.image_size);
    const auto landmarks = detector.detect(reference);
    if (!landmarks) fail(ErrorCode::NoFace, "no face found in the reference image");

    GenerationResult result;
    result.face = conditioning::locate_face(*landmarks, cfg.image_size, cfg.image_size, cfg.face_margin);
    const Image masked = conditioning::mask_reference(reference, result.face);

    ConditioningBundle<S> bundle;
    bundle.image_embedding = model.embed_image(reference);
    bundle.facemask_latents = model.facemask_guide(masked);

    const std::uint64_t seed = opts.seed.value_or(cfg.seed);
    const auto steps = sampling_timesteps(cfg.T, cfg.sample_steps);
    const int h = cfg.latent_size();
    const std::size_t total = seq.frames.size();
    const auto clip_len = static_cast<std::size_t>(cfg.clip_len);
    const std::size_t clips = (total + clip_len - 1) / clip_len;

    for (std::size_t k = 0; k < clips; ++k) {
        const std::size_t start = k * clip_len;
        const std::size_t end = std::min(total, start + clip_len);
        const int f = static_cast<int>(end - start);

        auto window = motion_window_for(result.frames, start, reference, cfg);
        bundle.reference_features = model.reference_features(conditioning::stack_reference(reference, window));
        Frames pose_maps;
        for (std::size_t i = start; i < end; ++i) {
            pose_maps.push_back(pose::render_pose_map(seq.frames[i], cfg.image_size, cfg.image_size, opts.style));
        }
        bundle.pose_latents = model.pose_guide(pose_maps);

        const ag::Shape shape{f, cfg.latent_channels, h, h};
        const auto noise = clip_noise(seed, k, ag::numel(shape));
        std::vector<S> x(noise.begin(), noise.end());
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const int t = steps[i];
            const int t_prev = i + 1 < steps.size() ? steps[i + 1] : -1;
            const Var<S> eps = model.denoise(Var<S>::constant(shape, x), t, bundle);
            x = ddim_step<S>(x, eps.value(), t, t_prev, model.schedule());
        }
        const Var<S> latents = Var<S>::constant(shape, std::move(x));
        result.clip_latents.push_back(from_var(latents));
        for (auto& frame : model.decode_frames(latents)) {
            clamp_unit(frame);
            result.frames.push_back(std::move(frame));
        }
        result.motion_windows.push_back(std::move(window));
        result.clip_ranges.emplace_back(start, end);
        if (opts.on_clip) opts.on_clip(k, clips);
    }
    return result;
}

} // namespace facepose::engine
