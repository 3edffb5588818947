#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "facepose/errors.hpp"
#include "facepose/image.hpp"
#include "facepose/pose/types.hpp"

namespace facepose::pose {

using PoseMap = Image;

struct Rgb {
    float r, g, b;
};

struct RenderStyle {
    int radius = 2;
    float confidence_threshold = 0.3f;
    // jaw, brows, nose, eyes, mouth
    std::array<Rgb, 5> group_colors{{
        {1.0f, 1.0f, 1.0f},
        {1.0f, 0.5f, 0.0f},
        {0.0f, 1.0f, 0.0f},
        {0.0f, 0.5f, 1.0f},
        {1.0f, 0.0f, 0.5f},
    }};
};

/// Rasterizes one frame: every keypoint at or above the confidence threshold
/// becomes a filled disk centred on pixel (x·width, y·height).
inline PoseMap render_pose_map(const PoseFrame& frame, int width, int height, const RenderStyle& style = {}) {
    if (width < 8 || height < 8) fail(ErrorCode::BadCanvas, "canvas must be at least 8x8");
    PoseMap map(width, height, 3, 0.0f);
    const int r = std::max(0, style.radius);
    const long r2 = static_cast<long>(r) * r;
    for (std::size_t i = 0; i < frame.keypoints.size(); ++i) {
        const auto& k = frame.keypoints[i];
        if (k.confidence < style.confidence_threshold) continue;
        const Rgb color = style.group_colors[static_cast<std::size_t>(face68_group(static_cast<int>(i)))];
        const int cx = static_cast<int>(std::lround(static_cast<double>(k.x) * width));
        const int cy = static_cast<int>(std::lround(static_cast<double>(k.y) * height));
        const int y_lo = std::max(0, cy - r), y_hi = std::min(height - 1, cy + r);
        const int x_lo = std::max(0, cx - r), x_hi = std::min(width - 1, cx + r);
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                const long dx = x - cx, dy = y - cy;
                if (dx * dx + dy * dy > r2) continue;
                map.at(x, y, 0) = color.r;
                map.at(x, y, 1) = color.g;
                map.at(x, y, 2) = color.b;
            }
        }
    }
    return map;
}

} // namespace facepose::pose
