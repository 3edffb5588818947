#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "facepose/image.hpp"
#include "facepose/pose/types.hpp"

// Procedural talking-face clips with matching landmark tracks. Used for toy
// training runs, demos and tests.
namespace facepose::synthetic {

struct FaceParams {
    float cx = 0.5f, cy = 0.5f;  // face centre
    float half = 0.22f;          // half-size of the face box
    float mouth_open = 0.0f;     // [0,1]
};

inline void paint_face(Image& img, const FaceParams& p) {
    const int w = img.width, h = img.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float u = (x + 0.5f) / w, v = (y + 0.5f) / h;
            float r = 0.15f + 0.25f * v, g = 0.3f, b = 0.55f - 0.2f * u;
            const float dx = (u - p.cx) / (p.half * 0.85f), dy = (v - p.cy) / p.half;
            if (dx * dx + dy * dy <= 1.0f) {
                r = 0.92f, g = 0.72f, b = 0.58f;
                const float ex = std::abs(u - p.cx) - 0.4f * p.half, ey = v - (p.cy - 0.3f * p.half);
                if (ex * ex + ey * ey < (0.12f * p.half) * (0.12f * p.half)) r = g = b = 0.1f;
                const float mx = (u - p.cx) / (0.35f * p.half);
                const float my = (v - (p.cy + 0.55f * p.half)) / ((0.06f + 0.14f * p.mouth_open) * p.half);
                if (mx * mx + my * my <= 1.0f) r = 0.55f, g = 0.12f, b = 0.15f;
            }
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    }
}

inline pose::PoseFrame face_landmarks(const FaceParams& p) {
    auto f = pose::face68_in_box(p.cx - p.half * 0.85f, p.cy - p.half, p.cx + p.half * 0.85f, p.cy + p.half);
    for (int idx : pose::kLowerLip) {
        auto& k = f.keypoints[static_cast<std::size_t>(idx)];
        k.y = std::clamp(k.y + 0.1f * p.half * p.mouth_open, 0.0f, 1.0f);
    }
    return f;
}

inline FaceParams clip_params(std::size_t i, std::size_t n) {
    const float phase = 2.0f * std::numbers::pi_v<float> * static_cast<float>(i) / static_cast<float>(std::max<std::size_t>(n, 1));
    FaceParams p;
    p.cx = 0.5f + 0.06f * std::sin(phase);
    p.cy = 0.5f + 0.02f * std::cos(phase);
    p.mouth_open = 0.5f + 0.5f * std::sin(2.0f * phase);
    return p;
}

struct Clip {
    Frames frames;
    pose::PoseSequence poses;
};

inline Clip talking_face_clip(std::size_t frames, int size, double fps = 24.0) {
    Clip clip;
    clip.poses.fps = fps;
    clip.poses.width = size;
    clip.poses.height = size;
    for (std::size_t i = 0; i < frames; ++i) {
        const auto p = clip_params(i, frames);
        Image img(size, size, 3);
        paint_face(img, p);
        clip.frames.push_back(std::move(img));
        clip.poses.frames.push_back(face_landmarks(p));
    }
    return clip;
}

inline Image reference_face(int size) {
    Image img(size, size, 3);
    paint_face(img, FaceParams{});
    return img;
}

/// Landmark-only sequences (2 s at 24 fps) used to seed an empty pose library.
inline std::vector<std::pair<std::string, pose::PoseSequence>> builtin_library() {
    constexpr int kFrames = 48;
    auto make = [](auto&& params_for) {
        pose::PoseSequence seq;
        for (int i = 0; i < kFrames; ++i) seq.frames.push_back(face_landmarks(params_for(2.0f * std::numbers::pi_v<float> * i / kFrames)));
        return seq;
    };
    return {
        {"nod", make([](float ph) { return FaceParams{0.5f, 0.5f + 0.04f * std::sin(ph), 0.22f, 0.1f}; })},
        {"talk", make([](float ph) { return FaceParams{0.5f, 0.5f, 0.22f, 0.5f + 0.5f * std::sin(3.0f * ph)}; })},
        {"wave", make([](float ph) { return FaceParams{0.5f + 0.06f * std::sin(ph), 0.5f, 0.22f, 0.5f + 0.5f * std::sin(2.0f * ph)}; })},
    };
}

} // namespace facepose::synthetic
