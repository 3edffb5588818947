#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <regex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "facepose/errors.hpp"
#include "facepose/pose/io.hpp"

namespace facepose::pose {

struct LibraryEntry {
    std::string id;
    std::string name;
    double duration_s = 0.0;
    double fps = 0.0;
};

/// Directory of `<id>.pose.json` files. Writers are serialized; readers run concurrently.
class PoseLibrary {
public:
    static constexpr std::string_view kSuffix = ".pose.json";

    explicit PoseLibrary(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) fail(ErrorCode::IoError, "cannot create library dir " + dir_.string());
    }

    static bool valid_id(const std::string& id) {
        static const std::regex re("[A-Za-z0-9_-]{1,64}");
        return std::regex_match(id, re);
    }

    std::vector<LibraryEntry> list() const {
        std::shared_lock lock(mutex_);
        std::vector<LibraryEntry> out;
        for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
            const auto fname = entry.path().filename().string();
            if (fname.size() <= kSuffix.size() || !fname.ends_with(kSuffix)) continue;
            const auto id = fname.substr(0, fname.size() - kSuffix.size());
            const auto seq = load_pose(entry.path());
            out.push_back({id, id, seq.duration_s(), seq.fps});
        }
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        return out;
    }

    PoseSequence get(const std::string& id) const {
        std::shared_lock lock(mutex_);
        const auto path = path_for(id);
        if (!valid_id(id) || !std::filesystem::exists(path)) fail(ErrorCode::NotFound, "no library sequence '" + id + "'");
        return load_pose(path);
    }

    bool contains(const std::string& id) const {
        std::shared_lock lock(mutex_);
        return valid_id(id) && std::filesystem::exists(path_for(id));
    }

    void add(const std::string& id, const PoseSequence& seq) {
        if (!valid_id(id)) fail(ErrorCode::ParseError, "invalid library id '" + id + "'");
        validate(seq);
        std::unique_lock lock(mutex_);
        const auto path = path_for(id);
        if (std::filesystem::exists(path)) fail(ErrorCode::DuplicateId, "library id '" + id + "' already present");
        auto tmp = path;
        tmp += ".tmp";
        save_pose(seq, tmp);
        std::filesystem::rename(tmp, path);
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path path_for(const std::string& id) const { return dir_ / (id + std::string(kSuffix)); }

    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
};

} // namespace facepose::pose
