#pragma once

#include <algorithm>
#include <cmath>

#include "facepose/errors.hpp"
#include "facepose/pose/types.hpp"

namespace facepose::pose {

/// Resamples to `target_fps`. The output holds round(N·target/source) frames
/// (at least one) spread evenly from the first to the last source frame;
/// coordinates are interpolated linearly and confidence is the minimum of the
/// two bracketing frames. Equal rates return the input unchanged.
inline PoseSequence resample_pose(const PoseSequence& seq, double target_fps) {
    if (!(target_fps > 0.0) || !std::isfinite(target_fps)) fail(ErrorCode::BadFps, "target fps must be positive");
    if (seq.frames.empty()) fail(ErrorCode::ParseError, "sequence has no frames");

    PoseSequence out = seq;
    out.fps = target_fps;
    if (target_fps == seq.fps) return out;

    const auto n = static_cast<long>(seq.frames.size());
    const long m = std::max(1L, std::lround(static_cast<double>(n) * target_fps / seq.fps));
    out.frames.clear();
    out.frames.reserve(static_cast<std::size_t>(m));
    for (long j = 0; j < m; ++j) {
        // exact rational position j·(n-1)/(m-1) on the source index axis
        const long num = j * (n - 1);
        const long den = std::max(1L, m - 1);
        const long i0 = m == 1 ? 0 : num / den;
        const long rem = m == 1 ? 0 : num % den;
        const auto& a = seq.frames[static_cast<std::size_t>(i0)];
        if (rem == 0) {
            out.frames.push_back(a);
            continue;
        }
        const auto& b = seq.frames[static_cast<std::size_t>(std::min(i0 + 1, n - 1))];
        const double alpha = static_cast<double>(rem) / static_cast<double>(den);
        PoseFrame f;
        f.keypoints.resize(a.keypoints.size());
        for (std::size_t k = 0; k < a.keypoints.size(); ++k) {
            const auto& ka = a.keypoints[k];
            const auto& kb = b.keypoints[k];
            Keypoint r;
            r.x = static_cast<float>(ka.x + alpha * (static_cast<double>(kb.x) - ka.x));
            r.y = static_cast<float>(ka.y + alpha * (static_cast<double>(kb.y) - ka.y));
            r.confidence = std::min(ka.confidence, kb.confidence);
            f.keypoints[k] = clamp_keypoint(r);
        }
        out.frames.push_back(std::move(f));
    }
    return out;
}

} // namespace facepose::pose
