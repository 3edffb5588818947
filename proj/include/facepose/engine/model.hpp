#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "facepose/conditioning/motion.hpp"
#include "facepose/engine/codec.hpp"
#include "facepose/engine/config.hpp"
#include "facepose/engine/networks.hpp"
#include "facepose/engine/schedule.hpp"

namespace facepose::engine {

/// Image → embedding tokens [1, L, D/L] for UNet cross-attention. A pretrained
/// image encoder plugs in here.
template <class S>
class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual Var<S> embed(const Image& image) const = 0;
};

/// Fixed-seed random linear projection of the 8×8 area-downsampled image.
template <class S>
class RandomProjectionEmbedder final : public ImageEmbedder<S> {
public:
    static constexpr int kGrid = 8;

    RandomProjectionEmbedder(int dim, int tokens, std::uint64_t seed) : dim_(dim), tokens_(tokens) {
        std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
        std::normal_distribution<double> dist(0.0, 1.0);
        const int in = kGrid * kGrid * 3;
        proj_.resize(static_cast<std::size_t>(in) * dim);
        for (auto& v : proj_) v = dist(rng) / std::sqrt(static_cast<double>(in));
    }

    Var<S> embed(const Image& image) const override {
        const int in = kGrid * kGrid * 3;
        std::vector<double> pooled(static_cast<std::size_t>(in), 0.0);
        std::vector<int> counts(static_cast<std::size_t>(kGrid * kGrid), 0);
        for (int y = 0; y < image.height; ++y) {
            const int gy = y * kGrid / image.height;
            for (int x = 0; x < image.width; ++x) {
                const int gx = x * kGrid / image.width;
                const int cell = gy * kGrid + gx;
                ++counts[static_cast<std::size_t>(cell)];
                for (int c = 0; c < 3; ++c) pooled[static_cast<std::size_t>(cell * 3 + c)] += image.at(x, y, c);
            }
        }
        for (int cell = 0; cell < kGrid * kGrid; ++cell)
            for (int c = 0; c < 3; ++c) pooled[static_cast<std::size_t>(cell * 3 + c)] /= std::max(1, counts[static_cast<std::size_t>(cell)]);
        std::vector<S> out(static_cast<std::size_t>(dim_), S(0));
        for (int i = 0; i < in; ++i)
            for (int d = 0; d < dim_; ++d)
                out[static_cast<std::size_t>(d)] += static_cast<S>(pooled[static_cast<std::size_t>(i)] * proj_[static_cast<std::size_t>(i) * dim_ + d]);
        return Var<S>::constant({1, tokens_, dim_ / tokens_}, std::move(out));
    }

private:
    int dim_;
    int tokens_;
    std::vector<double> proj_;
};

template <class S>
struct ConditioningBundle {
    std::vector<Var<S>> reference_features;  // one per UNet level, [1, c_l, h_l, w_l]
    Var<S> image_embedding;                  // [1, L, D/L]
    Var<S> pose_latents;                     // [f, C, h, w]
    Var<S> facemask_latents;                 // [1, C, h, w], broadcast over frames
};

/// Every network of the generator, built deterministically from config.seed.
template <class S>
class Model {
public:
    explicit Model(EngineConfig cfg) : config_(std::move(cfg)), params_(config_.seed) {
        validate(config_);
        schedule_ = make_schedule(config_.T, config_.beta_start, config_.beta_end);
        if (config_.codec == CodecProfile::Test) {
            codec_ = std::make_unique<SpaceToChannelCodec<S>>(config_.latent_down);
        } else {
            codec_ = std::make_unique<ConvAutoencoder<S>>(config_.latent_down, config_.latent_channels, config_.seed + 1);
        }
        const int lc = config_.latent_channels, c0 = config_.base_channels, c1 = 2 * config_.base_channels;
        pose_guider_ = Guider<S>(params_, "pose_guider", 3, lc, config_.latent_down);
        facemask_guider_ = Guider<S>(params_, "facemask_guider", 3, lc, config_.latent_down);
        reference_net_ = ReferenceNet<S>(params_, lc * (config_.n_motion + 1), c0, c1);
        unet_ = DenoisingUNet<S>(params_, lc, c0, c1, config_.attn_dim, config_.embed_dim / config_.embed_tokens);
        embedder_ = std::make_unique<RandomProjectionEmbedder<S>>(config_.embed_dim, config_.embed_tokens, config_.seed);
    }

    const EngineConfig& config() const { return config_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    LatentCodec<S>& codec() const { return *codec_; }
    const Guider<S>& pose_guider() const { return pose_guider_; }
    const Guider<S>& facemask_guider() const { return facemask_guider_; }
    const ReferenceNet<S>& reference_net() const { return reference_net_; }
    const DenoisingUNet<S>& unet() const { return unet_; }
    void set_embedder(std::unique_ptr<ImageEmbedder<S>> e) { embedder_ = std::move(e); }

    int latent_size() const { return config_.latent_size(); }

    /// Parameters trained by the diffusion objective.
    std::vector<std::pair<std::string, Var<S>>> trainable() const { return params_.params(); }

    /// Everything that goes into a checkpoint: trainable networks plus codec weights.
    std::vector<std::pair<std::string, Var<S>>> named_params() const {
        auto all = params_.params();
        for (auto& p : codec_->params()) all.push_back(p);
        return all;
    }

    Var<S> encode_frames(const Frames& frames) const {
        check_image_size(frames);
        return codec_->encode(images_to_var<S>(frames));
    }

    Frames decode_frames(const Var<S>& latents) const {
        const Var<S> img = codec_->decode(latents);
        const int n = img.dim(0), h = img.dim(2), w = img.dim(3);
        Frames out;
        out.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            Image frame(w, h, 3);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        frame.at(x, y, c) = static_cast<float>(img.value()[((static_cast<std::size_t>(i) * 3 + c) * h + y) * w + x]);
            out.push_back(std::move(frame));
        }
        return out;
    }

    /// The stack's 3-channel slots are encoded separately and concatenated slot-major.
    std::vector<Var<S>> reference_features(const conditioning::ReferenceStack& stack) const {
        const int expected = 3 * (config_.n_motion + 1);
        if (stack.channels != expected) {
            fail(ErrorCode::ShapeMismatch, "reference stack has " + std::to_string(stack.channels) + " channels, model expects " +
                                               std::to_string(expected) + " (n_motion=" + std::to_string(config_.n_motion) + ")");
        }
        if (stack.width != config_.image_size || stack.height != config_.image_size) {
            fail(ErrorCode::ShapeMismatch, "reference stack size differs from image_size");
        }
        Frames slots;
        for (int s = 0; s < stack.frame_count(); ++s) slots.push_back(stack.slice(s));
        const Var<S> z = codec_->encode(images_to_var<S>(slots));
        const Var<S> packed = ag::reshape(z, {1, z.dim(0) * z.dim(1), z.dim(2), z.dim(3)});
        return reference_net_(packed);
    }

    Var<S> pose_guide(const Frames& pose_maps) const {
        check_image_size(pose_maps);
        return pose_guider_(images_to_var<S>(pose_maps));
    }

    Var<S> facemask_guide(const Image& masked_reference) const {
        check_image_size(Frames{masked_reference});
        return facemask_guider_(images_to_var<S>(Frames{masked_reference}));
    }

    Var<S> embed_image(const Image& image) const { return embedder_->embed(image); }

    /// eps prediction for noisy latents [f, C, h, w] at step t.
    Var<S> denoise(const Var<S>& noisy, int t, const ConditioningBundle<S>& bundle, const DenoiseOptions& opts = {}) const {
        const int h = latent_size();
        if (noisy.rank() != 4 || noisy.dim(1) != config_.latent_channels || noisy.dim(2) != h || noisy.dim(3) != h) {
            fail(ErrorCode::ShapeMismatch, "noisy latents " + ag::shape_str(noisy.shape()) + " do not match config");
        }
        if (!bundle.pose_latents.defined() || bundle.pose_latents.shape() != noisy.shape()) {
            fail(ErrorCode::ShapeMismatch, "pose latents must match noisy latents");
        }
        if (!bundle.facemask_latents.defined() || bundle.facemask_latents.rank() != 4 || bundle.facemask_latents.dim(0) != 1) {
            fail(ErrorCode::ShapeMismatch, "facemask latents must be [1, C, h, w]");
        }
        if (bundle.reference_features.size() != 2) fail(ErrorCode::ShapeMismatch, "expected two reference feature levels");
        if (t < 0 || t >= schedule_.steps()) fail(ErrorCode::BadStep, "timestep " + std::to_string(t) + " out of range");
        const Var<S> x = ag::add_broadcast0(ag::add(noisy, bundle.pose_latents), bundle.facemask_latents);
        return unet_(x, t, bundle.reference_features, bundle.image_embedding, opts);
    }

private:
    void check_image_size(const Frames& frames) const {
        for (const auto& f : frames) {
            if (f.width != config_.image_size || f.height != config_.image_size || f.channels != 3) {
                fail(ErrorCode::ShapeMismatch, "image is " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                                                   ", model expects " + std::to_string(config_.image_size));
            }
        }
    }

    EngineConfig config_;
    NoiseSchedule schedule_;
    ParamStore<S> params_;
    std::unique_ptr<LatentCodec<S>> codec_;
    Guider<S> pose_guider_;
    Guider<S> facemask_guider_;
    ReferenceNet<S> reference_net_;
    DenoisingUNet<S> unet_;
    std::unique_ptr<ImageEmbedder<S>> embedder_;
};

} // namespace facepose::engine
