#pragma once

#include <cmath>
#include <vector>

#include "facepose/autograd/var.hpp"
#include "facepose/errors.hpp"
#include "facepose/image.hpp"

namespace facepose::engine {

/// (frames, channels, height, width) tensor, row-major.
struct LatentVideo {
    int frames = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    LatentVideo() = default;
    LatentVideo(int f, int c, int h, int w, float fill = 0.0f)
        : frames(f), channels(c), height(h), width(w), data(static_cast<std::size_t>(f) * c * h * w, fill) {}

    std::size_t frame_size() const { return static_cast<std::size_t>(channels) * height * width; }
    bool same_shape(const LatentVideo& o) const {
        return frames == o.frames && channels == o.channels && height == o.height && width == o.width;
    }
    bool finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
    ag::Shape shape() const { return {frames, channels, height, width}; }

    friend bool operator==(const LatentVideo&, const LatentVideo&) = default;
};

template <class S>
ag::Var<S> to_var(const LatentVideo& l) {
    return ag::Var<S>::constant(l.shape(), std::vector<S>(l.data.begin(), l.data.end()));
}

template <class S>
LatentVideo from_var(const ag::Var<S>& v) {
    if (v.rank() != 4) fail(ErrorCode::ShapeMismatch, "latent must be rank 4");
    LatentVideo l(v.dim(0), v.dim(1), v.dim(2), v.dim(3));
    for (std::size_t i = 0; i < l.data.size(); ++i) l.data[i] = static_cast<float>(v.value()[i]);
    return l;
}

/// HWC images → [N, C, H, W].
template <class S>
ag::Var<S> images_to_var(const Frames& frames) {
    if (frames.empty()) fail(ErrorCode::ShapeMismatch, "no images");
    const int w = frames[0].width, h = frames[0].height, c = frames[0].channels;
    std::vector<S> out(frames.size() * static_cast<std::size_t>(w) * h * c);
    std::size_t o = 0;
    for (const auto& img : frames) {
        if (img.width != w || img.height != h || img.channels != c) fail(ErrorCode::ShapeMismatch, "image sizes differ");
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out[o++] = static_cast<S>(img.at(x, y, ch));
    }
    return ag::Var<S>::constant({static_cast<int>(frames.size()), c, h, w}, std::move(out));
}

} // namespace facepose::engine
