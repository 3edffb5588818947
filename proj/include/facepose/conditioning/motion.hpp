#pragma once

#include <string>
#include <vector>

#include "facepose/errors.hpp"
#include "facepose/image.hpp"

namespace facepose::conditioning {

/// n consecutive frames taken from one source; `source_id` + `start` record where.
struct MotionWindow {
    Frames frames;
    std::string source_id;
    std::size_t start = 0;

    std::size_t size() const { return frames.size(); }
};

inline MotionWindow sample_motion_window(const Frames& clip, std::size_t start, std::size_t n,
                                         std::string source_id = "clip") {
    if (start > clip.size() || n > clip.size() - start) {
        fail(ErrorCode::OutOfRange, "window [" + std::to_string(start) + ", " + std::to_string(start + n) +
                                        ") exceeds clip of " + std::to_string(clip.size()) + " frames");
    }
    MotionWindow w;
    w.source_id = std::move(source_id);
    w.start = start;
    w.frames.assign(clip.begin() + static_cast<long>(start), clip.begin() + static_cast<long>(start + n));
    return w;
}

/// H×W×3(n+1) stack: reference in channels [0,3), motion frame k (oldest
/// first) in [3(k+1), 3(k+2)).
struct ReferenceStack {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;  // HWC

    int frame_count() const { return channels / 3; }

    /// Channels [3·slot, 3·slot+3) as an RGB image; slot 0 is the reference.
    Image slice(int slot) const {
        if (slot < 0 || 3 * slot + 3 > channels) fail(ErrorCode::OutOfRange, "stack slot out of range");
        Image out(width, height, 3);
        const std::size_t pixels = static_cast<std::size_t>(width) * height;
        for (std::size_t p = 0; p < pixels; ++p) {
            for (int c = 0; c < 3; ++c) out.data[p * 3 + c] = data[p * channels + 3 * slot + c];
        }
        return out;
    }
};

inline ReferenceStack stack_reference(const Image& reference, const MotionWindow& window) {
    if (reference.channels != 3) fail(ErrorCode::ShapeMismatch, "reference must be RGB");
    for (const auto& f : window.frames) {
        if (!f.same_size(reference) || f.channels != 3) fail(ErrorCode::ShapeMismatch, "motion frame size differs from reference");
    }
    ReferenceStack s;
    s.width = reference.width;
    s.height = reference.height;
    s.channels = 3 * static_cast<int>(window.size() + 1);
    const std::size_t pixels = static_cast<std::size_t>(s.width) * s.height;
    s.data.resize(pixels * s.channels);
    for (std::size_t p = 0; p < pixels; ++p) {
        float* dst = &s.data[p * s.channels];
        for (int c = 0; c < 3; ++c) dst[c] = reference.data[p * 3 + c];
        for (std::size_t k = 0; k < window.size(); ++k) {
            for (int c = 0; c < 3; ++c) dst[3 * (k + 1) + c] = window.frames[k].data[p * 3 + c];
        }
    }
    return s;
}

} // namespace facepose::conditioning
