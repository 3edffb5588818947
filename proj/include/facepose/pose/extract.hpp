#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <optional>
#include <vector>

#include "facepose/errors.hpp"
#include "facepose/image.hpp"
#include "facepose/pose/types.hpp"

namespace facepose::pose {

/// Frame → landmarks. Returning nullopt (or throwing) means no face in that frame.
/// Real landmark models plug in behind this interface.
class LandmarkDetector {
public:
    virtual ~LandmarkDetector() = default;
    virtual std::optional<PoseFrame> detect(const Image& frame) const = 0;
    virtual std::string schema_id() const { return std::string(kFace68); }
};

/// Always returns the same landmarks.
class ConstantDetector final : public LandmarkDetector {
public:
    explicit ConstantDetector(PoseFrame frame) : frame_(std::move(frame)) {}
    std::optional<PoseFrame> detect(const Image&) const override { return frame_; }

private:
    PoseFrame frame_;
};

/// Places all 68 points on the centroid of pixels brighter than a threshold.
class CentroidDetector final : public LandmarkDetector {
public:
    explicit CentroidDetector(float threshold = 0.5f) : threshold_(threshold) {}

    std::optional<PoseFrame> detect(const Image& frame) const override {
        double sx = 0, sy = 0;
        long count = 0;
        for (int y = 0; y < frame.height; ++y) {
            for (int x = 0; x < frame.width; ++x) {
                float lum = 0;
                for (int c = 0; c < frame.channels; ++c) lum += frame.at(x, y, c);
                if (lum / frame.channels > threshold_) {
                    sx += x + 0.5;
                    sy += y + 0.5;
                    ++count;
                }
            }
        }
        if (count == 0) return std::nullopt;
        Keypoint k{static_cast<float>(sx / count / frame.width), static_cast<float>(sy / count / frame.height), 1.0f};
        PoseFrame out;
        out.keypoints.assign(kFace68Count, clamp_keypoint(k));
        return out;
    }

private:
    float threshold_;
};

/// Deterministic face stand-in: pixels that differ from the border's median
/// colour form the foreground; the canonical 68-point face is fitted to the
/// foreground's bounding box. Uniform images have no face.
class BlobFaceDetector final : public LandmarkDetector {
public:
    explicit BlobFaceDetector(float distance = 0.1f, float min_fraction = 0.01f)
        : distance_(distance), min_fraction_(min_fraction) {}

    std::optional<PoseFrame> detect(const Image& frame) const override {
        if (frame.empty() || frame.channels < 3) return std::nullopt;
        std::array<float, 3> bg{};
        for (int c = 0; c < 3; ++c) {
            std::vector<float> border;
            for (int x = 0; x < frame.width; ++x) {
                border.push_back(frame.at(x, 0, c));
                border.push_back(frame.at(x, frame.height - 1, c));
            }
            for (int y = 0; y < frame.height; ++y) {
                border.push_back(frame.at(0, y, c));
                border.push_back(frame.at(frame.width - 1, y, c));
            }
            auto mid = border.begin() + static_cast<long>(border.size() / 2);
            std::nth_element(border.begin(), mid, border.end());
            bg[static_cast<std::size_t>(c)] = *mid;
        }
        int x0 = frame.width, y0 = frame.height, x1 = -1, y1 = -1;
        long count = 0;
        for (int y = 0; y < frame.height; ++y) {
            for (int x = 0; x < frame.width; ++x) {
                float d = 0;
                for (int c = 0; c < 3; ++c) d += std::abs(frame.at(x, y, c) - bg[static_cast<std::size_t>(c)]);
                if (d <= distance_) continue;
                ++count;
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
        const double area = static_cast<double>(frame.width) * frame.height;
        if (count < 3 || count < min_fraction_ * area || x1 <= x0 || y1 <= y0) return std::nullopt;
        return face68_in_box(static_cast<float>(x0) / frame.width, static_cast<float>(y0) / frame.height,
                             static_cast<float>(x1 + 1) / frame.width, static_cast<float>(y1 + 1) / frame.height);
    }

private:
    float distance_;
    float min_fraction_;
};

/// One PoseFrame per video frame at the source fps. Frames where the detector
/// finds nothing (or throws) carry all-zero confidence.
inline PoseSequence extract_pose_from_video(const Frames& video_frames, double fps, const LandmarkDetector& detector) {
    if (video_frames.empty()) fail(ErrorCode::EmptyVideo, "video has no frames");
    if (!(fps > 0.0)) fail(ErrorCode::BadFps, "video fps must be positive");
    const auto count = schema_size(detector.schema_id());
    if (!count) fail(ErrorCode::DetectorFailure, "detector reports unknown schema");

    PoseSequence seq;
    seq.schema_id = detector.schema_id();
    seq.fps = fps;
    seq.width = video_frames.front().width;
    seq.height = video_frames.front().height;
    seq.frames.reserve(video_frames.size());
    std::size_t raised = 0;
    std::string last_error;
    for (const auto& frame : video_frames) {
        std::optional<PoseFrame> found;
        try {
            found = detector.detect(frame);
        } catch (const std::exception& e) {
            ++raised;
            last_error = e.what();
        }
        if (found && static_cast<int>(found->keypoints.size()) == *count) {
            for (auto& k : found->keypoints) k = clamp_keypoint(k);
            seq.frames.push_back(std::move(*found));
        } else {
            seq.frames.push_back(empty_frame(*count));
        }
    }
    if (raised == video_frames.size()) fail(ErrorCode::DetectorFailure, "detector failed on every frame: " + last_error);
    return seq;
}

} // namespace facepose::pose
