#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "facepose/errors.hpp"

namespace facepose {

/// Interleaved (HWC) float image, values nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c = 3, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    float& at(int x, int y, int c) { return data[index(x, y, c)]; }
    float at(int x, int y, int c) const { return data[index(x, y, c)]; }

    bool same_size(const Image& other) const {
        return width == other.width && height == other.height;
    }
    bool empty() const { return data.empty(); }

    friend bool operator==(const Image&, const Image&) = default;
};

using RgbImage = Image;
using Frames = std::vector<Image>;

inline Image solid_image(int w, int h, float r, float g, float b) {
    Image img(w, h, 3);
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        img.data[i] = r;
        img.data[i + 1] = g;
        img.data[i + 2] = b;
    }
    return img;
}

inline void clamp_unit(Image& img) {
    for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

/// Bilinear resize; used to bring toy-resolution output up to the job resolution.
inline Image resize_bilinear(const Image& src, int w, int h) {
    if (src.width == w && src.height == h) return src;
    Image out(w, h, src.channels);
    const float sx = static_cast<float>(src.width) / w;
    const float sy = static_cast<float>(src.height) / h;
    for (int y = 0; y < h; ++y) {
        float fy = std::max(0.0f, (y + 0.5f) * sy - 0.5f);
        int y0 = std::min(static_cast<int>(fy), src.height - 1);
        int y1 = std::min(y0 + 1, src.height - 1);
        float ay = fy - y0;
        for (int x = 0; x < w; ++x) {
            float fx = std::max(0.0f, (x + 0.5f) * sx - 0.5f);
            int x0 = std::min(static_cast<int>(fx), src.width - 1);
            int x1 = std::min(x0 + 1, src.width - 1);
            float ax = fx - x0;
            for (int c = 0; c < src.channels; ++c) {
                float top = src.at(x0, y0, c) * (1 - ax) + src.at(x1, y0, c) * ax;
                float bot = src.at(x0, y1, c) * (1 - ax) + src.at(x1, y1, c) * ax;
                out.at(x, y, c) = top * (1 - ay) + bot * ay;
            }
        }
    }
    return out;
}

inline std::vector<std::uint8_t> to_rgb8(const Image& img) {
    std::vector<std::uint8_t> out(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
    }
    return out;
}

inline Image from_rgb8(std::span<const std::uint8_t> bytes, int w, int h, int c = 3) {
    if (bytes.size() != static_cast<std::size_t>(w) * h * c) {
        fail(ErrorCode::ShapeMismatch, "pixel buffer size does not match dimensions");
    }
    Image img(w, h, c);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0f;
    return img;
}

} // namespace facepose
