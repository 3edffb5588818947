#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include <nlohmann/json.hpp>

#include "facepose/errors.hpp"
#include "facepose/pose/types.hpp"

namespace facepose::pose {

inline constexpr int kPoseFormatVersion = 1;

namespace detail {

inline void append_float(std::string& out, float v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
    out.append(buf, res.ptr);
}

inline void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip
    out.append(buf, res.ptr);
}

inline void append_json_string(std::string& out, const std::string& s) {
    out += nlohmann::json(s).dump();
}

} // namespace detail

/// Canonical serialization; key order and number formatting are fixed so that
/// equal sequences always produce identical bytes.
inline std::string to_json(const PoseSequence& seq) {
    std::string out;
    out.reserve(64 + seq.frames.size() * 68 * 36);
    out += "{\"version\":";
    out += std::to_string(kPoseFormatVersion);
    out += ",\"schema_id\":";
    detail::append_json_string(out, seq.schema_id);
    out += ",\"fps\":";
    detail::append_double(out, seq.fps);
    out += ",\"width\":";
    out += std::to_string(seq.width);
    out += ",\"height\":";
    out += std::to_string(seq.height);
    out += ",\"frames\":[";
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        if (f) out += ',';
        out += "{\"kp\":[";
        const auto& kps = seq.frames[f].keypoints;
        for (std::size_t i = 0; i < kps.size(); ++i) {
            if (i) out += ',';
            out += '[';
            detail::append_float(out, kps[i].x);
            out += ',';
            detail::append_float(out, kps[i].y);
            out += ',';
            detail::append_float(out, kps[i].confidence);
            out += ']';
        }
        out += "]}";
    }
    out += "]}";
    return out;
}

/// Parses and validates a pose document. Keys may come in any order.
inline PoseSequence from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
    }
    try {
        if (!doc.is_object()) fail(ErrorCode::ParseError, "pose document must be an object");
        if (!doc.contains("version") || !doc["version"].is_number_integer()) {
            fail(ErrorCode::ParseError, "missing integer version");
        }
        if (doc["version"].get<int>() != kPoseFormatVersion) {
            fail(ErrorCode::ParseError, "unsupported version " + doc["version"].dump());
        }
        PoseSequence seq;
        seq.schema_id = doc.at("schema_id").get<std::string>();
        if (!doc.at("fps").is_number()) fail(ErrorCode::ParseError, "fps must be a number");
        seq.fps = doc.at("fps").get<double>();
        if (!doc.at("width").is_number_integer() || !doc.at("height").is_number_integer()) {
            fail(ErrorCode::ParseError, "width/height must be integers");
        }
        seq.width = doc.at("width").get<int>();
        seq.height = doc.at("height").get<int>();
        const auto& frames = doc.at("frames");
        if (!frames.is_array()) fail(ErrorCode::ParseError, "frames must be an array");
        seq.frames.reserve(frames.size());
        for (const auto& fj : frames) {
            const auto& kp = fj.at("kp");
            if (!kp.is_array()) fail(ErrorCode::ParseError, "kp must be an array");
            PoseFrame frame;
            frame.keypoints.reserve(kp.size());
            for (const auto& triple : kp) {
                if (!triple.is_array() || triple.size() != 3) {
                    fail(ErrorCode::ParseError, "keypoint must be [x,y,c]");
                }
                for (const auto& v : triple) {
                    if (!v.is_number()) fail(ErrorCode::ParseError, "keypoint component must be a number");
                }
                frame.keypoints.push_back(
                    {triple[0].get<float>(), triple[1].get<float>(), triple[2].get<float>()});
            }
            seq.frames.push_back(std::move(frame));
        }
        validate(seq);
        return seq;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, std::string("bad pose document: ") + e.what());
    }
}

inline void save_pose(const PoseSequence& seq, const std::filesystem::path& path) {
    validate(seq);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << to_json(seq);
    if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

inline PoseSequence load_pose(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

} // namespace facepose::pose
