#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "facepose/errors.hpp"
#include "facepose/image.hpp"
#include "facepose/pose/types.hpp"

namespace facepose::conditioning {

struct BBox {
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Single-channel binary mask, 1 inside the face rectangle.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    friend bool operator==(const Mask&, const Mask&) = default;
};

struct FaceRegion {
    BBox bbox;
    Mask mask;
};

inline constexpr double kDefaultMargin = 0.10;

/// Pixel columns/rows covered by a normalized bbox: [round(x0·W), round(x1·W)).
inline Mask rasterize_bbox(const BBox& b, int width, int height) {
    Mask m{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
    const int px0 = static_cast<int>(std::lround(b.x0 * width));
    const int px1 = static_cast<int>(std::lround(b.x1 * width));
    const int py0 = static_cast<int>(std::lround(b.y0 * height));
    const int py1 = static_cast<int>(std::lround(b.y1 * height));
    for (int y = std::max(0, py0); y < std::min(height, py1); ++y) {
        for (int x = std::max(0, px0); x < std::min(width, px1); ++x) {
            m.data[static_cast<std::size_t>(y) * width + x] = 1;
        }
    }
    return m;
}

inline Mask constant_mask(int width, int height, std::uint8_t value) {
    return {width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, value)};
}

/// Face Locator: hull of the confident landmarks, grown on every side by
/// margin_ratio × hull diagonal and clamped to the unit square.
inline BBox locate_face_bbox(const pose::PoseFrame& landmarks, double margin_ratio = kDefaultMargin) {
    if (!(margin_ratio >= 0.0)) fail(ErrorCode::BadConfig, "margin_ratio must be non-negative");
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    int confident = 0;
    for (const auto& k : landmarks.keypoints) {
        if (!(k.confidence > 0.0f)) continue;
        ++confident;
        x0 = std::min(x0, static_cast<double>(k.x));
        y0 = std::min(y0, static_cast<double>(k.y));
        x1 = std::max(x1, static_cast<double>(k.x));
        y1 = std::max(y1, static_cast<double>(k.y));
    }
    if (confident < 3) fail(ErrorCode::NoFace, "fewer than 3 confident landmarks");
    if (!(x1 > x0) || !(y1 > y0)) fail(ErrorCode::NoFace, "landmarks span a degenerate region");
    const double pad = margin_ratio * std::hypot(x1 - x0, y1 - y0);
    return {std::clamp(x0 - pad, 0.0, 1.0), std::clamp(y0 - pad, 0.0, 1.0), std::clamp(x1 + pad, 0.0, 1.0),
            std::clamp(y1 + pad, 0.0, 1.0)};
}

inline FaceRegion locate_face(const pose::PoseFrame& landmarks, int width, int height,
                              double margin_ratio = kDefaultMargin) {
    FaceRegion region;
    region.bbox = locate_face_bbox(landmarks, margin_ratio);
    region.mask = rasterize_bbox(region.bbox, width, height);
    return region;
}

using MaskedReference = Image;

/// reference ⊙ mask; pixels outside the mask are exactly 0, inside are copied.
inline MaskedReference mask_reference(const Image& reference, const Mask& mask) {
    if (reference.width != mask.width || reference.height != mask.height) {
        fail(ErrorCode::ShapeMismatch, "mask and reference sizes differ");
    }
    MaskedReference out(reference.width, reference.height, reference.channels, 0.0f);
    for (int y = 0; y < reference.height; ++y) {
        for (int x = 0; x < reference.width; ++x) {
            if (!mask.at(x, y)) continue;
            for (int c = 0; c < reference.channels; ++c) out.at(x, y, c) = reference.at(x, y, c);
        }
    }
    return out;
}

inline MaskedReference mask_reference(const Image& reference, const FaceRegion& region) {
    return mask_reference(reference, region.mask);
}

} // namespace facepose::conditioning
