#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "facepose/errors.hpp"
#include "facepose/image.hpp"
#include "facepose/png_io.hpp"

namespace facepose::service {

// ---------------------------------------------------------------- byte helpers

namespace detail {
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
    bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint16_t u16() {
        need(2);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    double f64() {
        need(8);
        double v;
        std::memcpy(&v, bytes_.data() + pos_, 8);
        pos_ += 8;
        return v;
    }
    std::string_view tag() {
        need(4);
        std::string_view v(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
        pos_ += 4;
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    void skip(std::size_t n) { take(n); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (!has(n)) fail(ErrorCode::UndecodableMedia, "truncated media");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};
} // namespace detail

// ---------------------------------------------------------------- audio

struct Audio {
    std::vector<float> samples;  // mono, [-1, 1]
    int sample_rate = 0;
};

/// RIFF/WAVE with 16-bit PCM or 32-bit float samples; channels are averaged.
inline Audio decode_wav(std::span<const std::uint8_t> bytes) {
    detail::Reader r(bytes);
    if (!r.has(12) || r.tag() != "RIFF") fail(ErrorCode::UndecodableMedia, "not a RIFF file");
    r.u32();
    if (r.tag() != "WAVE") fail(ErrorCode::UndecodableMedia, "not a WAVE file");
    int format = 0, channels = 0, bits = 0;
    Audio audio;
    bool have_fmt = false;
    while (r.has(8)) {
        const auto id = r.tag();
        const std::uint32_t size = r.u32();
        if (id == "fmt ") {
            if (size < 16) fail(ErrorCode::UndecodableMedia, "short fmt chunk");
            format = r.u16();
            channels = r.u16();
            audio.sample_rate = static_cast<int>(r.u32());
            r.u32();
            r.u16();
            bits = r.u16();
            r.skip(size - 16 + (size & 1));
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) fail(ErrorCode::UndecodableMedia, "data chunk before fmt");
            const bool pcm16 = format == 1 && bits == 16;
            const bool f32 = format == 3 && bits == 32;
            if (!pcm16 && !f32) fail(ErrorCode::UndecodableMedia, "unsupported WAV sample format");
            if (channels <= 0 || audio.sample_rate <= 0) fail(ErrorCode::UndecodableMedia, "bad WAV header");
            const std::size_t width = static_cast<std::size_t>(bits / 8) * static_cast<std::size_t>(channels);
            const auto data = r.take(std::min<std::size_t>(size, r.remaining()) / width * width);
            audio.samples.resize(data.size() / width);
            for (std::size_t i = 0; i < audio.samples.size(); ++i) {
                float acc = 0.0f;
                for (int c = 0; c < channels; ++c) {
                    const std::uint8_t* p = data.data() + i * width + static_cast<std::size_t>(c) * (bits / 8);
                    if (pcm16) {
                        acc += static_cast<float>(static_cast<std::int16_t>(p[0] | (p[1] << 8))) / 32768.0f;
                    } else {
                        float v;
                        std::memcpy(&v, p, 4);
                        acc += v;
                    }
                }
                audio.samples[i] = acc / static_cast<float>(channels);
            }
            return audio;
        } else {
            r.skip(std::min<std::size_t>(size + (size & 1), r.remaining()));
        }
    }
    fail(ErrorCode::UndecodableMedia, "WAV file has no data chunk");
}

/// Mono 16-bit PCM.
inline std::vector<std::uint8_t> encode_wav(std::span<const float> samples, int sample_rate) {
    std::vector<std::uint8_t> out;
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    detail::put_u32(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);
    detail::put_u16(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(sample_rate));
    detail::put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
    detail::put_u16(out, 2);
    detail::put_u16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    detail::put_u32(out, data_bytes);
    for (float s : samples) {
        const auto v = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f));
        detail::put_u16(out, static_cast<std::uint16_t>(v));
    }
    return out;
}

// ---------------------------------------------------------------- video

// Raw frames archive: "RAWV" | u32 version | u32 width | u32 height | f64 fps | u32 count | RGB8 frames.
inline constexpr std::uint32_t kRawVideoVersion = 1;
inline constexpr std::string_view kMp4MediaType = "video/mp4";
inline constexpr std::string_view kRawVideoMediaType = "application/x-facepose-rawvideo";

struct VideoInfo {
    int width = 0;
    int height = 0;
    double fps = 0.0;
    std::size_t frames = 0;
    double duration_s() const { return fps > 0.0 ? static_cast<double>(frames) / fps : 0.0; }
};

struct Video {
    Frames frames;
    double fps = 0.0;
};

struct EncodedVideo {
    std::vector<std::uint8_t> bytes;
    std::string media_type;
};

namespace detail {
inline VideoInfo check_frames(const Frames& frames, double fps) {
    if (frames.empty()) fail(ErrorCode::EncodeFailed, "no frames to encode");
    if (!(fps > 0.0)) fail(ErrorCode::EncodeFailed, "fps must be positive");
    for (const auto& f : frames) {
        if (!f.same_size(frames.front()) || f.channels != 3) fail(ErrorCode::EncodeFailed, "frames must share one RGB size");
    }
    return {frames.front().width, frames.front().height, fps, frames.size()};
}
} // namespace detail

inline std::vector<std::uint8_t> encode_raw_video(const Frames& frames, double fps) {
    const auto info = detail::check_frames(frames, fps);
    std::vector<std::uint8_t> out{'R', 'A', 'W', 'V'};
    detail::put_u32(out, kRawVideoVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(info.width));
    detail::put_u32(out, static_cast<std::uint32_t>(info.height));
    std::uint8_t fps_bytes[8];
    std::memcpy(fps_bytes, &fps, 8);
    out.insert(out.end(), fps_bytes, fps_bytes + 8);
    detail::put_u32(out, static_cast<std::uint32_t>(info.frames));
    for (const auto& f : frames) {
        const auto px = to_rgb8(f);
        out.insert(out.end(), px.begin(), px.end());
    }
    return out;
}

inline VideoInfo probe_raw_video(std::span<const std::uint8_t> bytes) {
    detail::Reader r(bytes);
    if (!r.has(4) || r.tag() != "RAWV") fail(ErrorCode::UndecodableMedia, "not a raw video archive");
    if (r.u32() != kRawVideoVersion) fail(ErrorCode::UndecodableMedia, "unsupported raw video version");
    VideoInfo info;
    info.width = static_cast<int>(r.u32());
    info.height = static_cast<int>(r.u32());
    info.fps = r.f64();
    info.frames = r.u32();
    if (info.width <= 0 || info.height <= 0 || info.width > 16384 || info.height > 16384 || !(info.fps > 0.0)) {
        fail(ErrorCode::UndecodableMedia, "bad raw video header");
    }
    const std::size_t expect = info.frames * static_cast<std::size_t>(info.width) * static_cast<std::size_t>(info.height) * 3;
    if (r.remaining() != expect) fail(ErrorCode::UndecodableMedia, "raw video payload size mismatch");
    return info;
}

inline Video decode_raw_video(std::span<const std::uint8_t> bytes) {
    const auto info = probe_raw_video(bytes);
    const std::size_t frame_bytes = static_cast<std::size_t>(info.width) * static_cast<std::size_t>(info.height) * 3;
    Video v;
    v.fps = info.fps;
    const std::size_t header = bytes.size() - info.frames * frame_bytes;
    for (std::size_t i = 0; i < info.frames; ++i) {
        v.frames.push_back(from_rgb8(bytes.subspan(header + i * frame_bytes, frame_bytes), info.width, info.height, 3));
    }
    return v;
}

/// Decodes an uploaded video. Only the raw frames archive is understood.
inline Video decode_video(std::span<const std::uint8_t> bytes) { return decode_raw_video(bytes); }

enum class EncoderChoice { Auto, Ffmpeg, Raw };

inline std::optional<std::filesystem::path> find_ffmpeg() {
    const char* path = std::getenv("PATH");
    if (!path) return std::nullopt;
    std::string_view rest(path);
    while (!rest.empty()) {
        const auto colon = rest.find(':');
        const auto dir = rest.substr(0, colon);
        const auto candidate = std::filesystem::path(std::string(dir)) / "ffmpeg";
        std::error_code ec;
        if (!dir.empty() && std::filesystem::is_regular_file(candidate, ec)) return candidate;
        if (colon == std::string_view::npos) break;
        rest.remove_prefix(colon + 1);
    }
    return std::nullopt;
}

/// H.264/MP4 through an ffmpeg child process.
inline std::vector<std::uint8_t> encode_mp4_ffmpeg(const Frames& frames, double fps, const std::filesystem::path& ffmpeg) {
    const auto info = detail::check_frames(frames, fps);
    const auto out_path = std::filesystem::temp_directory_path() /
                          ("facepose-" + std::to_string(reinterpret_cast<std::uintptr_t>(&frames)) + "-" + std::to_string(std::rand()) + ".mp4");
    const std::string cmd = "\"" + ffmpeg.string() + "\" -loglevel error -y -f rawvideo -pix_fmt rgb24 -s " + std::to_string(info.width) +
                            "x" + std::to_string(info.height) + " -r " + std::to_string(fps) +
                            " -i - -c:v libx264 -pix_fmt yuv420p -movflags +faststart \"" + out_path.string() + "\"";
    FILE* pipe = popen(cmd.c_str(), "w");
    if (!pipe) fail(ErrorCode::EncoderUnavailable, "cannot start ffmpeg");
    for (const auto& f : frames) {
        const auto px = to_rgb8(f);
        if (std::fwrite(px.data(), 1, px.size(), pipe) != px.size()) break;
    }
    const int status = pclose(pipe);
    if (status != 0) {
        std::filesystem::remove(out_path);
        fail(ErrorCode::EncodeFailed, "ffmpeg exited with status " + std::to_string(status));
    }
    auto bytes = read_file_bytes(out_path);
    std::filesystem::remove(out_path);
    return bytes;
}

/// Encodes frames; Auto prefers ffmpeg and falls back to the raw archive.
inline EncodedVideo encode_video(const Frames& frames, double fps, EncoderChoice choice = EncoderChoice::Auto) {
    detail::check_frames(frames, fps);
    if (choice != EncoderChoice::Raw) {
        if (const auto ffmpeg = find_ffmpeg()) return {encode_mp4_ffmpeg(frames, fps, *ffmpeg), std::string(kMp4MediaType)};
        if (choice == EncoderChoice::Ffmpeg) fail(ErrorCode::EncoderUnavailable, "ffmpeg not found on PATH");
    }
    return {encode_raw_video(frames, fps), std::string(kRawVideoMediaType)};
}

inline EncoderChoice encoder_from_string(const std::string& s) {
    if (s == "auto") return EncoderChoice::Auto;
    if (s == "ffmpeg") return EncoderChoice::Ffmpeg;
    if (s == "raw") return EncoderChoice::Raw;
    fail(ErrorCode::BadConfig, "unknown encoder '" + s + "'");
}

} // namespace facepose::service
