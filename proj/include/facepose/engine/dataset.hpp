#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "facepose/engine/train.hpp"
#include "facepose/png_io.hpp"
#include "facepose/pose/io.hpp"

namespace facepose::engine {

struct TrainingClip {
    std::string name;
    Frames frames;
    pose::PoseSequence poses;
};

inline std::string frame_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05zu.png", index);
    return buf;
}

/// Writes a clip as `<dir>/<name>/frame_%05d.png` plus `<dir>/<name>.pose.json`.
inline void save_training_clip(const std::filesystem::path& dir, const std::string& name, const Frames& frames,
                               const pose::PoseSequence& poses) {
    const auto clip_dir = dir / name;
    std::filesystem::create_directories(clip_dir);
    for (std::size_t i = 0; i < frames.size(); ++i) write_png(clip_dir / frame_file_name(i), frames[i]);
    pose::save_pose(poses, dir / (name + ".pose.json"));
}

/// Loads every `<clip>.pose.json` with a matching frame directory, resized to
/// `image_size`. Clips are returned sorted by name.
inline std::vector<TrainingClip> load_training_clips(const std::filesystem::path& dir, int image_size) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::IoError, "data dir " + dir.string() + " does not exist");
    std::vector<TrainingClip> clips;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto fname = entry.path().filename().string();
        if (!fname.ends_with(".pose.json")) continue;
        TrainingClip clip;
        clip.name = fname.substr(0, fname.size() - std::string_view(".pose.json").size());
        clip.poses = pose::load_pose(entry.path());
        const auto frame_dir = dir / clip.name;
        for (std::size_t i = 0; i < clip.poses.frames.size(); ++i) {
            const auto path = frame_dir / frame_file_name(i);
            if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "missing frame " + path.string());
            clip.frames.push_back(resize_bilinear(read_png(path), image_size, image_size));
        }
        clips.push_back(std::move(clip));
    }
    if (clips.empty()) fail(ErrorCode::IoError, "no clips (<name>.pose.json + <name>/frame_%05d.png) in " + dir.string());
    std::sort(clips.begin(), clips.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return clips;
}

/// Every clip_len window of every clip, in (clip, start) order. Reference frame is frame 0.
inline std::vector<TrainSample> all_train_samples(const std::vector<TrainingClip>& clips, const EngineConfig& config) {
    std::vector<TrainSample> out;
    const auto f = static_cast<std::size_t>(config.clip_len);
    for (const auto& c : clips) {
        if (c.frames.size() < f) continue;
        for (std::size_t start = 0; start + f <= c.frames.size(); ++start) out.push_back(make_train_sample(c.frames, c.poses, start, config));
    }
    if (out.empty()) fail(ErrorCode::OutOfRange, "no clip has clip_len = " + std::to_string(config.clip_len) + " frames");
    return out;
}

} // namespace facepose::engine
