#pragma once

#include <cmath>
#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "facepose/autograd/optim.hpp"
#include "facepose/conditioning/face_locator.hpp"
#include "facepose/conditioning/motion.hpp"
#include "facepose/engine/model.hpp"
#include "facepose/pose/render.hpp"

namespace facepose::engine {

/// One training example: a target clip, its conditioning, and the motion
/// frames that immediately precede it in the same source clip.
struct TrainSample {
    Frames target;
    Image reference;
    Frames pose_maps;
    Image masked_reference;
    conditioning::MotionWindow motion;
};

/// Cuts a sample out of a ground-truth clip. Motion frames are clip[start-n, start);
/// when start < n the window falls back to copies of the reference frame.
inline TrainSample make_train_sample(const Frames& clip, const pose::PoseSequence& poses, std::size_t start,
                                     const EngineConfig& config, std::size_t reference_index = 0) {
    const auto f = static_cast<std::size_t>(config.clip_len);
    const auto n = static_cast<std::size_t>(config.n_motion);
    if (clip.size() != poses.frames.size()) fail(ErrorCode::ShapeMismatch, "clip and pose track lengths differ");
    if (start + f > clip.size() || reference_index >= clip.size()) fail(ErrorCode::OutOfRange, "sample window exceeds clip");

    TrainSample s;
    s.reference = clip[reference_index];
    s.target.assign(clip.begin() + static_cast<long>(start), clip.begin() + static_cast<long>(start + f));
    for (std::size_t i = start; i < start + f; ++i) {
        s.pose_maps.push_back(pose::render_pose_map(poses.frames[i], config.image_size, config.image_size));
    }
    const auto region = conditioning::locate_face(poses.frames[reference_index], config.image_size, config.image_size, config.face_margin);
    s.masked_reference = conditioning::mask_reference(s.reference, region);
    if (start >= n) {
        s.motion = conditioning::sample_motion_window(clip, start - n, n, "train");
    } else {
        s.motion.source_id = "reference";
        s.motion.frames.assign(n, s.reference);
    }
    return s;
}

/// Mean squared error between predicted and true noise at step t.
template <class S, class Predictor>
Var<S> diffusion_loss(Predictor&& predict, const Var<S>& x0, const std::vector<S>& eps, int t, const NoiseSchedule& schedule) {
    const auto noisy = add_noise<S>(x0.value(), eps, t, schedule);
    const Var<S> x_t = Var<S>::constant(x0.shape(), noisy);
    const Var<S> eps_pred = predict(x_t, t);
    return ag::mse(eps_pred, Var<S>::constant(x0.shape(), eps));
}

template <class S>
ConditioningBundle<S> build_bundle(const Model<S>& model, const TrainSample& sample) {
    ConditioningBundle<S> b;
    b.reference_features = model.reference_features(conditioning::stack_reference(sample.reference, sample.motion));
    b.image_embedding = model.embed_image(sample.reference);
    b.pose_latents = model.pose_guide(sample.pose_maps);
    b.facemask_latents = model.facemask_guide(sample.masked_reference);
    return b;
}

/// eps-prediction trainer over the model's trainable parameters.
template <class S>
class Trainer {
public:
    Trainer(Model<S>& model, ag::AdamOptions opts = {.lr = 3e-3, .clip_norm = 1.0}, std::uint64_t seed = 0)
        : model_(model), optimizer_(params_of(model), opts), rng_(seed) {}

    /// Samples t ~ U{0..T-1} and eps ~ N(0, I), takes one optimizer step, returns the loss.
    S step(const TrainSample& sample) {
        const Var<S> x0 = model_.encode_frames(sample.target);
        std::uniform_int_distribution<int> pick(0, model_.schedule().steps() - 1);
        const int t = pick(rng_);
        const auto eps = draw_noise(x0.size());
        const auto bundle = build_bundle(model_, sample);
        const Var<S> loss = diffusion_loss<S>([&](const Var<S>& x_t, int tt) { return model_.denoise(x_t, tt, bundle); }, x0, eps, t,
                                              model_.schedule());
        const S value = loss.item();
        if (!std::isfinite(static_cast<double>(value))) fail(ErrorCode::NonFiniteLoss, "loss is not finite");
        loss.backward();
        optimizer_.step();
        return value;
    }

    /// Loss averaged over fixed (t, eps) probes; no parameter update.
    S evaluate(const TrainSample& sample, const std::vector<int>& steps, std::uint64_t probe_seed = 12345) const {
        ag::NoGradGuard no_grad;
        const Var<S> x0 = model_.encode_frames(sample.target);
        const auto bundle = build_bundle(model_, sample);
        std::mt19937_64 rng(probe_seed);
        double total = 0.0;
        for (int t : steps) {
            const auto eps = draw_noise(x0.size(), rng);
            total += static_cast<double>(
                diffusion_loss<S>([&](const Var<S>& x_t, int tt) { return model_.denoise(x_t, tt, bundle); }, x0, eps, t, model_.schedule())
                    .item());
        }
        return static_cast<S>(total / static_cast<double>(steps.size()));
    }

    long steps_taken() const { return optimizer_.steps(); }

private:
    static std::vector<Var<S>> params_of(const Model<S>& model) {
        std::vector<Var<S>> out;
        for (const auto& [_, p] : model.trainable()) out.push_back(p);
        return out;
    }

    std::vector<S> draw_noise(std::size_t n) { return draw_noise(n, rng_); }

    static std::vector<S> draw_noise(std::size_t n, std::mt19937_64& rng) {
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<S> eps(n);
        for (auto& e : eps) e = static_cast<S>(dist(rng));
        return eps;
    }

    Model<S>& model_;
    ag::Adam<S> optimizer_;
    std::mt19937_64 rng_;
};

} // namespace facepose::engine
