#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facepose/errors.hpp"
#include "facepose/png_io.hpp"

namespace facepose::service {

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::IoError, "sha256 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 15]);
    }
    return out;
}

struct ArtifactMeta {
    std::string id;  // sha256 of the content
    std::string media_type;
    std::uint64_t size = 0;
    std::string checksum;
};

/// Content-addressed blob store: `<dir>/<id>` plus `<dir>/<id>.json` metadata.
/// Writing identical bytes twice yields the same id and a single blob.
class ArtifactStore {
public:
    explicit ArtifactStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) fail(ErrorCode::IoError, "cannot create artifact dir " + dir_.string());
    }

    ArtifactMeta put(std::span<const std::uint8_t> bytes, const std::string& media_type) {
        ArtifactMeta meta{sha256_hex(bytes), media_type, bytes.size(), ""};
        meta.checksum = meta.id;
        std::lock_guard lock(mutex_);
        const auto blob = dir_ / meta.id;
        if (!std::filesystem::exists(meta_path(meta.id))) {
            write_atomic(blob, bytes);
            const std::string j = nlohmann::json{{"id", meta.id}, {"media_type", meta.media_type}, {"size", meta.size},
                                                 {"checksum", meta.checksum}}
                                      .dump();
            write_atomic(meta_path(meta.id), std::span(reinterpret_cast<const std::uint8_t*>(j.data()), j.size()));
        }
        return meta;
    }

    bool contains(const std::string& id) const { return valid_id(id) && std::filesystem::exists(meta_path(id)); }

    ArtifactMeta meta(const std::string& id) const {
        if (!contains(id)) fail(ErrorCode::NotFound, "no artifact '" + id + "'");
        try {
            const auto text = read_file_bytes(meta_path(id));
            const auto j = nlohmann::json::parse(text.begin(), text.end());
            return {j.at("id").get<std::string>(), j.at("media_type").get<std::string>(), j.at("size").get<std::uint64_t>(),
                    j.at("checksum").get<std::string>()};
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::IoError, "corrupt artifact metadata for " + id + ": " + e.what());
        }
    }

    /// Reads a blob and verifies it against its stored checksum.
    std::vector<std::uint8_t> get(const std::string& id) const {
        const auto m = meta(id);
        auto bytes = read_file_bytes(dir_ / id);
        if (bytes.size() != m.size || sha256_hex(bytes) != m.checksum) fail(ErrorCode::IoError, "checksum mismatch for artifact " + id);
        return bytes;
    }

    std::vector<ArtifactMeta> list() const {
        std::vector<ArtifactMeta> out;
        for (const auto& e : std::filesystem::directory_iterator(dir_)) {
            const auto name = e.path().filename().string();
            if (name.ends_with(".json")) out.push_back(meta(name.substr(0, name.size() - 5)));
        }
        return out;
    }

    const std::filesystem::path& dir() const { return dir_; }

    static bool valid_id(const std::string& id) {
        return id.size() == 64 && id.find_first_not_of("0123456789abcdef") == std::string::npos;
    }

private:
    std::filesystem::path meta_path(const std::string& id) const { return dir_ / (id + ".json"); }

    static void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
        auto tmp = path;
        tmp += ".tmp";
        write_file_bytes(tmp, bytes);
        std::filesystem::rename(tmp, path);
    }

    std::filesystem::path dir_;
    std::mutex mutex_;
};

} // namespace facepose::service
