#pragma once

#include <bit>
#include <optional>
#include <string>
#include <vector>

#include "facepose/engine/nn.hpp"

namespace facepose::engine {

/// Lightweight CNN mapping an image-resolution input into latent space:
/// 3×3 stem, log2(down) stride-2 stages, zero-initialised output conv so the
/// guider contributes exactly nothing until trained. Used for both the pose
/// maps and the masked reference face.
template <class S>
struct Guider {
    std::vector<Conv2d<S>> stages;
    Conv2d<S> out;

    Guider() = default;
    Guider(ParamStore<S>& ps, const std::string& name, int in_channels, int out_channels, int down) {
        int c = 16;
        stages.emplace_back(ps, name + ".stem", in_channels, c, 3, 1);
        const int n_down = std::countr_zero(static_cast<unsigned>(down));
        for (int i = 0; i < n_down; ++i) {
            const int next = std::min(2 * c, 32);
            stages.emplace_back(ps, name + ".down" + std::to_string(i), c, next, 3, 2);
            c = next;
        }
        out = Conv2d<S>(ps, name + ".out", c, out_channels, 3, 1, Init::Zero);
    }

    Var<S> operator()(const Var<S>& x) const {
        Var<S> h = x;
        for (const auto& s : stages) h = ag::silu(s(h));
        return out(h);
    }
};

/// x + conv(silu(norm(conv(silu(norm(x))) + time bias))).
template <class S>
struct ResBlock {
    GroupNorm<S> norm1, norm2;
    Conv2d<S> conv1, conv2;
    std::optional<Linear<S>> time_proj;

    ResBlock() = default;
    ResBlock(ParamStore<S>& ps, const std::string& name, int channels, int time_dim = 0) {
        norm1 = GroupNorm<S>(ps, name + ".norm1", channels);
        conv1 = Conv2d<S>(ps, name + ".conv1", channels, channels);
        norm2 = GroupNorm<S>(ps, name + ".norm2", channels);
        conv2 = Conv2d<S>(ps, name + ".conv2", channels, channels);
        if (time_dim > 0) time_proj.emplace(ps, name + ".time", time_dim, channels);
    }

    Var<S> operator()(const Var<S>& x, const Var<S>& temb = {}) const {
        Var<S> h = conv1(ag::silu(norm1(x)));
        if (time_proj && temb.defined()) h = ag::add_channel_bias(h, ag::reshape((*time_proj)(temb), {x.dim(1)}));
        h = conv2(ag::silu(norm2(h)));
        return ag::add(x, h);
    }
};

/// Per-frame self-attention whose key/value set also contains the Reference
/// Net tokens of the same resolution.
template <class S>
struct SpatialAttention {
    GroupNorm<S> norm;
    Linear<S> q, k, v, o;

    SpatialAttention() = default;
    SpatialAttention(ParamStore<S>& ps, const std::string& name, int channels, int dim) {
        norm = GroupNorm<S>(ps, name + ".norm", channels);
        q = Linear<S>(ps, name + ".q", channels, dim);
        k = Linear<S>(ps, name + ".k", channels, dim);
        v = Linear<S>(ps, name + ".v", channels, dim);
        o = Linear<S>(ps, name + ".o", dim, channels, 0.5);
    }

    /// x[f, C, H, W]; reference[1, C, H', W'] or undefined.
    Var<S> operator()(const Var<S>& x, const Var<S>& reference = {}) const {
        const int f = x.dim(0);
        const Var<S> tokens = to_tokens(norm(x));
        Var<S> keys = k(tokens), values = v(tokens);
        if (reference.defined()) {
            const Var<S> ref = to_tokens(norm(reference));
            keys = ag::concat(keys, ag::repeat0(k(ref), f), 1);
            values = ag::concat(values, ag::repeat0(v(ref), f), 1);
        }
        const Var<S> mixed = ag::attention(q(tokens), keys, values);
        return ag::add(x, from_tokens(o(mixed), x.dim(2), x.dim(3)));
    }
};

/// Cross-attention from feature tokens to image-embedding tokens [1, L, D].
template <class S>
struct CrossAttention {
    GroupNorm<S> norm;
    Linear<S> q, k, v, o;

    CrossAttention() = default;
    CrossAttention(ParamStore<S>& ps, const std::string& name, int channels, int context_dim, int dim) {
        norm = GroupNorm<S>(ps, name + ".norm", channels);
        q = Linear<S>(ps, name + ".q", channels, dim);
        k = Linear<S>(ps, name + ".k", context_dim, dim);
        v = Linear<S>(ps, name + ".v", context_dim, dim);
        o = Linear<S>(ps, name + ".o", dim, channels, 0.5);
    }

    Var<S> operator()(const Var<S>& x, const Var<S>& context) const {
        const int f = x.dim(0);
        const Var<S> tokens = to_tokens(norm(x));
        const Var<S> keys = ag::repeat0(k(context), f);
        const Var<S> values = ag::repeat0(v(context), f);
        return ag::add(x, from_tokens(o(ag::attention(q(tokens), keys, values)), x.dim(2), x.dim(3)));
    }
};

/// Attention across the frame axis at every spatial location. No positional
/// bias, so the block is equivariant to frame permutations.
template <class S>
struct TemporalAttention {
    GroupNorm<S> norm;
    Linear<S> q, k, v, o;

    TemporalAttention() = default;
    TemporalAttention(ParamStore<S>& ps, const std::string& name, int channels, int dim) {
        norm = GroupNorm<S>(ps, name + ".norm", channels);
        q = Linear<S>(ps, name + ".q", channels, dim);
        k = Linear<S>(ps, name + ".k", channels, dim);
        v = Linear<S>(ps, name + ".v", channels, dim);
        o = Linear<S>(ps, name + ".o", dim, channels, 0.5);
    }

    Var<S> operator()(const Var<S>& x, ag::AttentionMix mix = ag::AttentionMix::Softmax) const {
        const int f = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        // [f, C, HW] → [HW, f, C]
        const Var<S> tokens = ag::permute(ag::reshape(norm(x), {f, c, h * w}), {2, 0, 1});
        const Var<S> mixed = o(ag::attention(q(tokens), k(tokens), v(tokens), mix));
        return ag::add(x, ag::reshape(ag::permute(mixed, {1, 2, 0}), {f, c, h, w}));
    }
};

/// Encoder half of the UNet applied to the (encoded) reference stack; one
/// feature map per UNet resolution level.
template <class S>
struct ReferenceNet {
    Conv2d<S> conv_in;
    ResBlock<S> res0;
    Conv2d<S> down;
    ResBlock<S> res1;
    int in_channels = 0;

    ReferenceNet() = default;
    ReferenceNet(ParamStore<S>& ps, int in_channels_, int c0, int c1) : in_channels(in_channels_) {
        conv_in = Conv2d<S>(ps, "reference_net.conv_in", in_channels, c0);
        res0 = ResBlock<S>(ps, "reference_net.res0", c0);
        down = Conv2d<S>(ps, "reference_net.down", c0, c1, 3, 2);
        res1 = ResBlock<S>(ps, "reference_net.res1", c1);
    }

    std::vector<Var<S>> operator()(const Var<S>& encoded_stack) const {
        const Var<S> f0 = res0(conv_in(encoded_stack));
        const Var<S> f1 = res1(down(f0));
        return {f0, f1};
    }
};

struct DenoiseOptions {
    /// Replace temporal softmax mixing with identity (each frame keeps its own value).
    ag::AttentionMix temporal_mix = ag::AttentionMix::Softmax;
};

/// Two-level denoising UNet. Level blocks: ResBlock → spatial attention with
/// reference tokens → cross-attention to the image embedding → temporal attention.
template <class S>
struct DenoisingUNet {
    static constexpr int kTimeFeatures = 64;

    Linear<S> time_mlp;
    Conv2d<S> conv_in;
    ResBlock<S> res0;
    SpatialAttention<S> spatial0;
    CrossAttention<S> cross0;
    TemporalAttention<S> temporal0;
    Conv2d<S> down;
    ResBlock<S> res1;
    SpatialAttention<S> spatial1;
    CrossAttention<S> cross1;
    TemporalAttention<S> temporal1;
    Conv2d<S> up;
    ResBlock<S> res2;
    GroupNorm<S> norm_out;
    Conv2d<S> conv_out;
    Conv2d<S> skip;  // 1×1 input-to-output path, zero at init
    int time_dim = 0;

    DenoisingUNet() = default;
    DenoisingUNet(ParamStore<S>& ps, int latent_channels, int c0, int c1, int attn_dim, int context_dim)
        : time_dim(4 * c0) {
        time_mlp = Linear<S>(ps, "unet.time_mlp", kTimeFeatures, time_dim);
        conv_in = Conv2d<S>(ps, "unet.conv_in", latent_channels, c0);
        res0 = ResBlock<S>(ps, "unet.res0", c0, time_dim);
        spatial0 = SpatialAttention<S>(ps, "unet.spatial0", c0, attn_dim);
        cross0 = CrossAttention<S>(ps, "unet.cross0", c0, context_dim, attn_dim);
        temporal0 = TemporalAttention<S>(ps, "unet.temporal0", c0, attn_dim);
        down = Conv2d<S>(ps, "unet.down", c0, c1, 3, 2);
        res1 = ResBlock<S>(ps, "unet.res1", c1, time_dim);
        spatial1 = SpatialAttention<S>(ps, "unet.spatial1", c1, attn_dim);
        cross1 = CrossAttention<S>(ps, "unet.cross1", c1, context_dim, attn_dim);
        temporal1 = TemporalAttention<S>(ps, "unet.temporal1", c1, attn_dim);
        up = Conv2d<S>(ps, "unet.up", c1, c0);
        res2 = ResBlock<S>(ps, "unet.res2", c0, time_dim);
        norm_out = GroupNorm<S>(ps, "unet.norm_out", c0);
        conv_out = Conv2d<S>(ps, "unet.conv_out", c0, latent_channels, 3, 1, Init::Zero);
        skip = Conv2d<S>(ps, "unet.skip", latent_channels, latent_channels, 1, 1, Init::Zero);
    }

    /// x: conditioned noisy latents [f, C, h, w]; reference: per-level features
    /// [1, c_l, h_l, w_l]; context: image embedding tokens [1, L, D].
    Var<S> operator()(const Var<S>& x, int t, const std::vector<Var<S>>& reference, const Var<S>& context,
                      const DenoiseOptions& opts = {}) const {
        const Var<S> temb = ag::silu(time_mlp(timestep_embedding<S>(t, kTimeFeatures)));
        Var<S> h0 = res0(conv_in(x), temb);
        h0 = spatial0(h0, reference.at(0));
        h0 = cross0(h0, context);
        h0 = temporal0(h0, opts.temporal_mix);

        Var<S> h1 = res1(down(h0), temb);
        h1 = spatial1(h1, reference.at(1));
        h1 = cross1(h1, context);
        h1 = temporal1(h1, opts.temporal_mix);

        Var<S> u = ag::add(up(ag::upsample2x(h1)), h0);
        u = res2(u, temb);
        return ag::add(conv_out(ag::silu(norm_out(u))), skip(x));
    }
};

} // namespace facepose::engine
