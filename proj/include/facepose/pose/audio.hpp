#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "facepose/errors.hpp"
#include "facepose/pose/types.hpp"

namespace facepose::pose {

inline constexpr int kAudioPoseFps = 24;

/// Maps one audio window (one output frame) to a pose. Learned audio-to-pose
/// models plug in here.
class AudioPosePredictor {
public:
    virtual ~AudioPosePredictor() = default;
    virtual PoseFrame predict(std::span<const float> window, const PoseFrame& template_frame) const = 0;
};

inline double rms(std::span<const float> window) {
    if (window.empty()) return 0.0;
    double acc = 0.0;
    for (float s : window) acc += static_cast<double>(s) * s;
    return std::sqrt(acc / static_cast<double>(window.size()));
}

/// Opens the mouth linearly with window RMS: the lower lip drops by
/// max_offset · min(1, rms / full_scale_rms).
class EnergyMouthPredictor final : public AudioPosePredictor {
public:
    explicit EnergyMouthPredictor(float max_offset = 0.05f, double full_scale_rms = 1.0)
        : max_offset_(max_offset), full_scale_rms_(full_scale_rms) {}

    float offset_for(double window_rms) const {
        const double level = std::clamp(window_rms / full_scale_rms_, 0.0, 1.0);
        return static_cast<float>(max_offset_ * level);
    }

    PoseFrame predict(std::span<const float> window, const PoseFrame& template_frame) const override {
        PoseFrame out = template_frame;
        const float offset = offset_for(rms(window));
        if (offset == 0.0f) return out;
        for (int idx : kLowerLip) {
            if (idx < static_cast<int>(out.keypoints.size())) {
                auto& k = out.keypoints[static_cast<std::size_t>(idx)];
                k.y = std::clamp(k.y + offset, 0.0f, 1.0f);
            }
        }
        return out;
    }

    float max_offset() const { return max_offset_; }

private:
    float max_offset_;
    double full_scale_rms_;
};

/// 24 fps pose track, floor(duration·24) frames; frame i sees samples
/// [floor(i·sr/24), floor((i+1)·sr/24)).
inline PoseSequence pose_from_audio(std::span<const float> audio, int sample_rate, const PoseFrame& template_frame,
                                    const AudioPosePredictor& predictor, int width = 512, int height = 512) {
    if (sample_rate <= 0) fail(ErrorCode::BadSampleRate, "sample rate must be positive");
    if (audio.empty()) fail(ErrorCode::EmptyAudio, "audio has no samples");
    validate_frame(template_frame, kFace68Count);

    const auto samples = static_cast<long long>(audio.size());
    const long long frames = samples * kAudioPoseFps / sample_rate;
    if (frames < 1) fail(ErrorCode::EmptyAudio, "audio shorter than one frame period");

    PoseSequence seq;
    seq.fps = kAudioPoseFps;
    seq.width = width;
    seq.height = height;
    seq.frames.reserve(static_cast<std::size_t>(frames));
    for (long long i = 0; i < frames; ++i) {
        const auto lo = static_cast<std::size_t>(i * sample_rate / kAudioPoseFps);
        const auto hi = static_cast<std::size_t>((i + 1) * sample_rate / kAudioPoseFps);
        seq.frames.push_back(predictor.predict(audio.subspan(lo, hi - lo), template_frame));
    }
    return seq;
}

inline PoseSequence pose_from_audio(std::span<const float> audio, int sample_rate) {
    return pose_from_audio(audio, sample_rate, neutral_face68(), EnergyMouthPredictor{});
}

} // namespace facepose::pose
