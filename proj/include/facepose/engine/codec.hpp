#pragma once

#include <bit>
#include <memory>
#include <string>
#include <vector>

#include "facepose/autograd/optim.hpp"
#include "facepose/engine/latent.hpp"
#include "facepose/engine/nn.hpp"

namespace facepose::engine {

/// Image ↔ latent mapping on [N, 3, H, W] / [N, C, H/down, W/down].
template <class S>
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual Var<S> encode(const Var<S>& images) const = 0;
    virtual Var<S> decode(const Var<S>& latents) const = 0;
    virtual int latent_channels() const = 0;
    virtual int down() const = 0;
    virtual std::vector<std::pair<std::string, Var<S>>> params() const { return {}; }

protected:
    void check_images(const Var<S>& x) const {
        if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) % down() != 0 || x.dim(3) % down() != 0) {
            fail(ErrorCode::ShapeMismatch, "codec input " + ag::shape_str(x.shape()) + " not divisible by " + std::to_string(down()));
        }
    }
    void check_latents(const Var<S>& z) const {
        if (z.rank() != 4 || z.dim(1) != latent_channels()) {
            fail(ErrorCode::ShapeMismatch, "latent " + ag::shape_str(z.shape()) + " has wrong channel count");
        }
    }
};

/// Lossless space-to-channel rearrangement: pixel (c, y·r+dy, x·r+dx) moves to
/// channel c·r² + dy·r + dx at (y, x). decode(encode(x)) == x bit-exactly.
template <class S>
class SpaceToChannelCodec final : public LatentCodec<S> {
public:
    explicit SpaceToChannelCodec(int down) : down_(down) {}

    Var<S> encode(const Var<S>& x) const override {
        this->check_images(x);
        const int n = x.dim(0), h = x.dim(2) / down_, w = x.dim(3) / down_, r = down_;
        const Var<S> six = ag::reshape(x, {n, 3, h, r, w, r});
        return ag::reshape(ag::permute(six, {0, 1, 3, 5, 2, 4}), {n, 3 * r * r, h, w});
    }

    Var<S> decode(const Var<S>& z) const override {
        this->check_latents(z);
        const int n = z.dim(0), h = z.dim(2), w = z.dim(3), r = down_;
        const Var<S> six = ag::reshape(z, {n, 3, r, r, h, w});
        return ag::reshape(ag::permute(six, {0, 1, 4, 2, 5, 3}), {n, 3, h * r, w * r});
    }

    int latent_channels() const override { return 3 * down_ * down_; }
    int down() const override { return down_; }

private:
    int down_;
};

/// Small convolutional autoencoder; lossy, must be fitted before use.
template <class S>
class ConvAutoencoder final : public LatentCodec<S> {
public:
    ConvAutoencoder(int down, int latent_channels, std::uint64_t seed)
        : down_(down), latent_channels_(latent_channels), ps_(seed) {
        const int stages = std::countr_zero(static_cast<unsigned>(down));
        enc_.emplace_back(ps_, "codec.enc.stem", 3, 32, 3, 1);
        for (int i = 0; i < stages; ++i) enc_.emplace_back(ps_, "codec.enc.down" + std::to_string(i), 32, 32, 3, 2);
        enc_out_ = Conv2d<S>(ps_, "codec.enc.out", 32, latent_channels, 3, 1);
        dec_in_ = Conv2d<S>(ps_, "codec.dec.in", latent_channels, 32, 3, 1);
        for (int i = 0; i < stages; ++i) dec_.emplace_back(ps_, "codec.dec.up" + std::to_string(i), 32, 32, 3, 1);
        dec_out_ = Conv2d<S>(ps_, "codec.dec.out", 32, 3, 3, 1);
    }

    Var<S> encode(const Var<S>& x) const override {
        this->check_images(x);
        Var<S> h = x;
        for (const auto& c : enc_) h = ag::silu(c(h));
        return enc_out_(h);
    }

    Var<S> decode(const Var<S>& z) const override {
        this->check_latents(z);
        Var<S> h = ag::silu(dec_in_(z));
        for (const auto& c : dec_) h = ag::silu(c(ag::upsample2x(h)));
        return dec_out_(h);
    }

    int latent_channels() const override { return latent_channels_; }
    int down() const override { return down_; }
    std::vector<std::pair<std::string, Var<S>>> params() const override { return ps_.params(); }

    /// Fits reconstruction on the given images with Adam; returns the final MSE.
    double fit(const Frames& images, int steps, double lr = 2e-3) {
        const Var<S> x = images_to_var<S>(images);
        std::vector<Var<S>> vars;
        for (const auto& [_, p] : ps_.params()) vars.push_back(p);
        ag::Adam<S> opt(vars, {.lr = lr});
        double last = 0.0;
        for (int s = 0; s < steps; ++s) {
            const Var<S> loss = ag::mse(decode(encode(x)), x);
            loss.backward();
            opt.step();
            last = static_cast<double>(loss.item());
        }
        return static_cast<double>(ag::mse(decode(encode(x)), x).item());
    }

private:
    int down_;
    int latent_channels_;
    ParamStore<S> ps_;
    std::vector<Conv2d<S>> enc_;
    Conv2d<S> enc_out_;
    Conv2d<S> dec_in_;
    std::vector<Conv2d<S>> dec_;
    Conv2d<S> dec_out_;
};

} // namespace facepose::engine
