#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "facepose/engine/model.hpp"

namespace facepose::engine {

// Layout (little-endian):
//   "FPCKPT\0\0" | u32 version | u64 config_len | config JSON
//   | u32 tensor_count | per tensor: u32 name_len, name, u32 rank, i32 dims[rank], f32 data[]
inline constexpr char kCheckpointMagic[8] = {'F', 'P', 'C', 'K', 'P', 'T', 0, 0};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T take(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail(ErrorCode::BadCheckpoint, "truncated checkpoint");
    return v;
}
} // namespace detail

template <class S>
void save_checkpoint(const Model<S>& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    const std::string cfg = to_json(model.config()).dump();
    detail::put<std::uint64_t>(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const auto params = model.named_params();
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, var] : params) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(var.rank()));
        for (int d : var.shape()) detail::put<std::int32_t>(out, d);
        for (S v : var.value()) detail::put<float>(out, static_cast<float>(v));
    }
    if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

template <class S = float>
std::unique_ptr<Model<S>> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::BadCheckpoint, "cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) fail(ErrorCode::BadCheckpoint, "not a checkpoint file");
    const auto version = detail::take<std::uint32_t>(in);
    if (version != kCheckpointVersion) fail(ErrorCode::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
    const auto cfg_len = detail::take<std::uint64_t>(in);
    if (cfg_len > (1u << 20)) fail(ErrorCode::BadCheckpoint, "config block too large");
    std::string cfg(cfg_len, '\0');
    in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
    if (!in) fail(ErrorCode::BadCheckpoint, "truncated config");
    EngineConfig config;
    try {
        config = config_from_json(nlohmann::json::parse(cfg));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::BadCheckpoint, std::string("bad config block: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::BadCheckpoint, e.what());
    }
    auto model = std::make_unique<Model<S>>(config);
    std::map<std::string, Var<S>> by_name;
    for (const auto& [name, var] : model->named_params()) by_name.emplace(name, var);

    const auto count = detail::take<std::uint32_t>(in);
    std::size_t loaded = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::take<std::uint32_t>(in);
        if (name_len > 4096) fail(ErrorCode::BadCheckpoint, "tensor name too long");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rank = detail::take<std::uint32_t>(in);
        if (rank > 8) fail(ErrorCode::BadCheckpoint, "tensor rank too large");
        ag::Shape shape(rank);
        for (auto& d : shape) d = detail::take<std::int32_t>(in);
        auto it = by_name.find(name);
        if (it == by_name.end()) fail(ErrorCode::BadCheckpoint, "unexpected tensor '" + name + "'");
        if (it->second.shape() != shape) fail(ErrorCode::BadCheckpoint, "shape mismatch for '" + name + "'");
        auto& values = it->second.mutable_value();
        for (auto& v : values) v = static_cast<S>(detail::take<float>(in));
        ++loaded;
    }
    if (loaded != by_name.size()) fail(ErrorCode::BadCheckpoint, "checkpoint is missing tensors");
    return model;
}

/// Raw dump of per-clip latents (float32), for determinism checks.
inline void dump_latents(const std::vector<LatentVideo>& clips, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(clips.size()));
    for (const auto& c : clips) {
        for (int d : {c.frames, c.channels, c.height, c.width}) detail::put<std::int32_t>(out, d);
        out.write(reinterpret_cast<const char*>(c.data.data()), static_cast<std::streamsize>(c.data.size() * sizeof(float)));
    }
}

} // namespace facepose::engine
