#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "facepose/errors.hpp"

namespace facepose::engine {

enum class CodecProfile { Test, Learned };
enum class ColdStart { Reference, Zeros };

/// Generation/training configuration. JSON keys mirror the field names.
struct EngineConfig {
    int image_size = 512;
    int latent_down = 8;
    int latent_channels = 4;
    int clip_len = 16;
    int n_motion = 2;
    int T = 1000;
    int sample_steps = 25;
    double beta_start = 8.5e-4;
    double beta_end = 1.2e-2;
    int fps_out = 24;
    std::uint64_t seed = 0;

    // architecture / pipeline knobs
    CodecProfile codec = CodecProfile::Learned;
    ColdStart motion_cold_start = ColdStart::Reference;
    int base_channels = 32;
    int attn_dim = 64;
    int embed_dim = 128;
    int embed_tokens = 4;
    double face_margin = 0.10;

    int latent_size() const { return image_size / latent_down; }

    /// 64×64 images, lossless factor-4 latent (48 channels), 8-frame clips.
    static EngineConfig toy() {
        EngineConfig c;
        c.image_size = 64;
        c.latent_down = 4;
        c.latent_channels = 48;
        c.clip_len = 8;
        c.codec = CodecProfile::Test;
        return c;
    }

    friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

inline void validate(const EngineConfig& c) {
    auto bad = [](const std::string& why) { fail(ErrorCode::BadConfig, why); };
    if (c.image_size <= 0 || c.latent_down <= 0) bad("image_size and latent_down must be positive");
    if (c.image_size % c.latent_down != 0) bad("image_size must be divisible by latent_down");
    if (c.latent_down < 2 || !std::has_single_bit(static_cast<unsigned>(c.latent_down))) bad("latent_down must be a power of two >= 2");
    if (c.latent_size() % 2 != 0) bad("latent size must be even for the two-level UNet");
    if (c.latent_channels <= 0) bad("latent_channels must be positive");
    if (c.codec == CodecProfile::Test && c.latent_channels != 3 * c.latent_down * c.latent_down) {
        bad("test codec needs latent_channels = 3*latent_down^2");
    }
    if (c.clip_len < 1) bad("clip_len must be >= 1");
    if (c.n_motion != 0 && c.n_motion != 1 && c.n_motion != 2 && c.n_motion != 4) bad("n_motion must be one of 0,1,2,4");
    if (c.T < 1 || c.sample_steps < 1 || c.sample_steps > c.T) bad("need T >= sample_steps >= 1");
    if (!(c.beta_start > 0.0) || !(c.beta_start <= c.beta_end) || !(c.beta_end < 1.0)) bad("need 0 < beta_start <= beta_end < 1");
    if (c.fps_out <= 0) bad("fps_out must be positive");
    if (c.base_channels <= 0 || c.attn_dim <= 0 || c.embed_dim <= 0 || c.embed_tokens <= 0 || c.embed_dim % c.embed_tokens != 0) {
        bad("architecture sizes must be positive and embed_dim divisible by embed_tokens");
    }
    if (!(c.face_margin >= 0.0)) bad("face_margin must be non-negative");
}

inline nlohmann::json to_json(const EngineConfig& c) {
    return nlohmann::json{
        {"image_size", c.image_size},
        {"latent_down", c.latent_down},
        {"latent_channels", c.latent_channels},
        {"clip_len", c.clip_len},
        {"n_motion", c.n_motion},
        {"T", c.T},
        {"sample_steps", c.sample_steps},
        {"beta_start", c.beta_start},
        {"beta_end", c.beta_end},
        {"fps_out", c.fps_out},
        {"seed", c.seed},
        {"codec", c.codec == CodecProfile::Test ? "test" : "learned"},
        {"motion_cold_start", c.motion_cold_start == ColdStart::Reference ? "reference" : "zeros"},
        {"base_channels", c.base_channels},
        {"attn_dim", c.attn_dim},
        {"embed_dim", c.embed_dim},
        {"embed_tokens", c.embed_tokens},
        {"face_margin", c.face_margin},
    };
}

/// Missing keys keep their defaults; a "profile":"toy" key selects toy defaults first.
inline EngineConfig config_from_json(const nlohmann::json& j) {
    try {
        EngineConfig c = j.value("profile", std::string("default")) == "toy" ? EngineConfig::toy() : EngineConfig{};
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        };
        get("image_size", c.image_size);
        get("latent_down", c.latent_down);
        get("latent_channels", c.latent_channels);
        get("clip_len", c.clip_len);
        get("n_motion", c.n_motion);
        get("T", c.T);
        get("sample_steps", c.sample_steps);
        get("beta_start", c.beta_start);
        get("beta_end", c.beta_end);
        get("fps_out", c.fps_out);
        get("seed", c.seed);
        get("base_channels", c.base_channels);
        get("attn_dim", c.attn_dim);
        get("embed_dim", c.embed_dim);
        get("embed_tokens", c.embed_tokens);
        get("face_margin", c.face_margin);
        if (j.contains("codec")) {
            const auto v = j.at("codec").get<std::string>();
            if (v != "test" && v != "learned") fail(ErrorCode::BadConfig, "codec must be 'test' or 'learned'");
            c.codec = v == "test" ? CodecProfile::Test : CodecProfile::Learned;
        }
        if (j.contains("motion_cold_start")) {
            const auto v = j.at("motion_cold_start").get<std::string>();
            if (v != "reference" && v != "zeros") fail(ErrorCode::BadConfig, "motion_cold_start must be 'reference' or 'zeros'");
            c.motion_cold_start = v == "reference" ? ColdStart::Reference : ColdStart::Zeros;
        }
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::BadConfig, std::string("config: ") + e.what());
    }
}

inline EngineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open config " + path.string());
    try {
        return config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::BadConfig, std::string("config is not JSON: ") + e.what());
    }
}

} // namespace facepose::engine
