#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "facepose/errors.hpp"

namespace facepose::pose {

struct Keypoint {
    float x = 0.0f;  // normalized [0,1]
    float y = 0.0f;  // normalized [0,1]
    float confidence = 0.0f;

    friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct PoseFrame {
    std::vector<Keypoint> keypoints;

    std::size_t size() const { return keypoints.size(); }
    friend bool operator==(const PoseFrame&, const PoseFrame&) = default;
};

struct PoseSequence {
    std::string schema_id = "face68";
    double fps = 24.0;
    int width = 512;
    int height = 512;
    std::vector<PoseFrame> frames;

    double duration_s() const { return static_cast<double>(frames.size()) / fps; }
    friend bool operator==(const PoseSequence&, const PoseSequence&) = default;
};

inline constexpr std::string_view kFace68 = "face68";
inline constexpr int kFace68Count = 68;

/// Keypoint count declared by a landmark schema, or nullopt for unknown schemas.
inline std::optional<int> schema_size(std::string_view schema_id) {
    if (schema_id == kFace68) return kFace68Count;
    return std::nullopt;
}

// face68 landmark groups (iBUG 300-W ordering).
enum class LandmarkGroup { Jaw, Brows, Nose, Eyes, Mouth };

inline LandmarkGroup face68_group(int index) {
    if (index < 17) return LandmarkGroup::Jaw;
    if (index < 27) return LandmarkGroup::Brows;
    if (index < 36) return LandmarkGroup::Nose;
    if (index < 48) return LandmarkGroup::Eyes;
    return LandmarkGroup::Mouth;
}

/// Lower lip indices (outer 55..59, inner 65..67); these move when the mouth opens.
inline constexpr int kLowerLip[] = {55, 56, 57, 58, 59, 65, 66, 67};
inline constexpr int kLowerLipCenter = 57;

inline bool in_unit(float v) { return v >= 0.0f && v <= 1.0f; }

inline Keypoint clamp_keypoint(Keypoint k) {
    k.x = std::clamp(k.x, 0.0f, 1.0f);
    k.y = std::clamp(k.y, 0.0f, 1.0f);
    k.confidence = std::clamp(k.confidence, 0.0f, 1.0f);
    return k;
}

inline void validate_frame(const PoseFrame& frame, int expected_count) {
    if (static_cast<int>(frame.keypoints.size()) != expected_count) {
        fail(ErrorCode::ParseError, "frame has " + std::to_string(frame.keypoints.size()) +
                                        " keypoints, schema declares " + std::to_string(expected_count));
    }
    for (const auto& k : frame.keypoints) {
        if (!std::isfinite(k.x) || !std::isfinite(k.y) || !std::isfinite(k.confidence)) {
            fail(ErrorCode::ParseError, "non-finite keypoint value");
        }
        if (!in_unit(k.x) || !in_unit(k.y) || !in_unit(k.confidence)) {
            fail(ErrorCode::ParseError, "keypoint value outside [0,1]");
        }
    }
}

/// Throws ParseError if the sequence breaks any structural invariant.
inline void validate(const PoseSequence& seq) {
    auto count = schema_size(seq.schema_id);
    if (!count) fail(ErrorCode::ParseError, "unknown schema '" + seq.schema_id + "'");
    if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) fail(ErrorCode::ParseError, "fps must be positive");
    if (seq.width <= 0 || seq.height <= 0) fail(ErrorCode::ParseError, "canvas must be positive");
    if (seq.frames.empty()) fail(ErrorCode::ParseError, "sequence has no frames");
    for (const auto& f : seq.frames) validate_frame(f, *count);
}

/// Canonical 68-point face in the unit box; jaw spans the full width, chin touches y = 1.
inline std::vector<Keypoint> canonical_face68() {
    std::vector<Keypoint> kp;
    kp.reserve(68);
    auto add = [&](double x, double y) {
        kp.push_back({static_cast<float>(x), static_cast<float>(y), 1.0f});
    };
    constexpr double pi = std::numbers::pi;
    for (int i = 0; i < 17; ++i) {  // jaw
        double a = pi * (1.0 - i / 16.0);
        add(0.5 + 0.5 * std::cos(a), 0.3 + 0.7 * std::sin(a));
    }
    for (int side = 0; side < 2; ++side) {  // brows
        double cx = side == 0 ? 0.3 : 0.7;
        for (int i = 0; i < 5; ++i) {
            double u = (i - 2) / 2.0;
            add(cx + 0.12 * u, 0.2 - 0.04 * (1.0 - u * u));
        }
    }
    for (int i = 0; i < 4; ++i) add(0.5, 0.3 + 0.0833333333 * i);  // nose bridge
    for (int i = 0; i < 5; ++i) add(0.42 + 0.04 * i, 0.6 + 0.02 * (1.0 - std::abs(i - 2) / 2.0));
    for (int side = 0; side < 2; ++side) {  // eyes
        double cx = side == 0 ? 0.3 : 0.7;
        for (int i = 0; i < 6; ++i) {
            double a = pi - 2.0 * pi * i / 6.0;
            add(cx + 0.08 * std::cos(a), 0.35 - 0.035 * std::sin(a));
        }
    }
    for (int i = 0; i < 12; ++i) {  // outer lip, left corner clockwise
        double a = pi - 2.0 * pi * i / 12.0;
        add(0.5 + 0.16 * std::cos(a), 0.78 - 0.06 * std::sin(a));
    }
    for (int i = 0; i < 8; ++i) {  // inner lip
        double a = pi - 2.0 * pi * i / 8.0;
        add(0.5 + 0.1 * std::cos(a), 0.78 - 0.025 * std::sin(a));
    }
    return kp;
}

/// Canonical face scaled into the box [x0,x1]×[y0,y1].
inline PoseFrame face68_in_box(float x0, float y0, float x1, float y1, float confidence = 1.0f) {
    PoseFrame f;
    f.keypoints = canonical_face68();
    for (auto& k : f.keypoints) {
        k.x = x0 + k.x * (x1 - x0);
        k.y = y0 + k.y * (y1 - y0);
        k.confidence = confidence;
        k = clamp_keypoint(k);
    }
    return f;
}

/// Neutral-face template centred on the canvas, used by the audio predictor.
inline PoseFrame neutral_face68() { return face68_in_box(0.3f, 0.25f, 0.7f, 0.75f); }

inline PoseFrame empty_frame(int count) {
    PoseFrame f;
    f.keypoints.assign(static_cast<std::size_t>(count), Keypoint{});
    return f;
}

} // namespace facepose::pose
