#pragma once

#include <chrono>
#include <functional>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <thread>

#include "facepose/engine/generate.hpp"
#include "facepose/pose/io.hpp"
#include "facepose/pose/resample.hpp"
#include "facepose/service/artifacts.hpp"
#include "facepose/service/jobs.hpp"
#include "facepose/service/media.hpp"

namespace facepose::service {

inline constexpr std::string_view kPoseMediaType = "application/x-facepose-pose+json";
inline constexpr std::string_view kPngMediaType = "image/png";

/// Produces output frames for one job. `heartbeat` should be called
/// periodically on long runs so the worker can extend its lease.
using VideoGenerator =
    std::function<Frames(const Image& reference, const pose::PoseSequence& seq, const JobParams& params, const std::function<void()>& heartbeat)>;

/// Generator backed by an engine model: one frame per pose frame, resized to
/// the job's output resolution.
template <class S>
VideoGenerator engine_generator(std::shared_ptr<const engine::Model<S>> model, std::shared_ptr<const pose::LandmarkDetector> detector) {
    return [model, detector](const Image& reference, const pose::PoseSequence& seq, const JobParams& params,
                             const std::function<void()>& heartbeat) {
        engine::GenerateOptions opts;
        opts.seed = params.seed;
        opts.on_clip = [&](std::size_t, std::size_t) { heartbeat(); };
        auto result = engine::generate_video(*model, reference, seq, *detector, opts);
        Frames out;
        out.reserve(result.frames.size());
        for (const auto& f : result.frames) out.push_back(resize_bilinear(f, params.width, params.height));
        return out;
    };
}

enum class CrashPoint { None, AfterClaim, AfterGenerate, AfterStore };

/// Simulated process death: the worker stops without touching the job record.
struct InjectedCrash : std::runtime_error {
    InjectedCrash() : std::runtime_error("injected worker crash") {}
};

struct WorkerOptions {
    std::string id = "worker";
    double lease_seconds = 60.0;
    std::size_t max_frames = 2400;
    EncoderChoice encoder = EncoderChoice::Auto;
};

class Worker {
public:
    Worker(JobStore& jobs, ArtifactStore& artifacts, VideoGenerator generate, WorkerOptions opts = {})
        : jobs_(jobs), artifacts_(artifacts), generate_(std::move(generate)), opts_(std::move(opts)) {}

    /// Claims and processes at most one job. Returns false when nothing was claimable.
    bool run_once(CrashPoint crash = CrashPoint::None) {
        const auto job = jobs_.claim(opts_.id, opts_.lease_seconds);
        if (!job) return false;
        const std::string token = job->lease_token();
        if (crash == CrashPoint::AfterClaim) throw InjectedCrash();
        try {
            const Image reference = decode_png(artifacts_.get(job->reference_ref));
            const auto pose_bytes = artifacts_.get(job->pose_ref);
            auto seq = pose::resample_pose(pose::from_json(std::string(pose_bytes.begin(), pose_bytes.end())), job->params.fps);
            if (seq.frames.size() > opts_.max_frames) {
                fail(ErrorCode::TooLarge, std::to_string(seq.frames.size()) + " frames exceeds the limit of " + std::to_string(opts_.max_frames));
            }
            const auto heartbeat = [&] { jobs_.renew(job->id, token, opts_.lease_seconds); };
            const Frames frames = generate_(reference, seq, job->params, heartbeat);
            if (frames.size() != seq.frames.size()) fail(ErrorCode::EncodeFailed, "generator returned the wrong frame count");
            if (crash == CrashPoint::AfterGenerate) throw InjectedCrash();
            const auto video = encode_video(frames, job->params.fps, opts_.encoder);
            const auto stored = artifacts_.put(video.bytes, video.media_type);
            if (crash == CrashPoint::AfterStore) throw InjectedCrash();
            ResultMeta meta{frames.size(), job->params.fps, frames.front().width, frames.front().height,
                            static_cast<double>(frames.size()) / job->params.fps, video.media_type};
            jobs_.succeed(job->id, token, stored.id, meta);
        } catch (const InjectedCrash&) {
            throw;
        } catch (const std::exception& e) {
            jobs_.fail_job(job->id, token, e.what());
        }
        return true;
    }

    /// Polls until stopped.
    void run(std::stop_token stop, std::chrono::milliseconds idle = std::chrono::milliseconds(200)) {
        while (!stop.stop_requested()) {
            bool worked = false;
            try {
                worked = run_once();
            } catch (const std::exception&) {
                // store-level failure; retry after the idle delay
            }
            if (!worked) std::this_thread::sleep_for(idle);
        }
    }

    const WorkerOptions& options() const { return opts_; }

private:
    JobStore& jobs_;
    ArtifactStore& artifacts_;
    VideoGenerator generate_;
    WorkerOptions opts_;
};

} // namespace facepose::service
