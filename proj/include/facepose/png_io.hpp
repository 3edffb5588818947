#pragma once

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "facepose/errors.hpp"
#include "facepose/image.hpp"

namespace facepose {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

/// Decodes any PNG into 3-channel RGB. Throws InvalidImage on malformed input.
inline Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        fail(ErrorCode::InvalidImage, "not a PNG image");
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        fail(ErrorCode::InvalidImage, "PNG decode failed: " + msg);
    }
    return from_rgb8(pixels, static_cast<int>(img.width), static_cast<int>(img.height), 3);
}

inline std::vector<std::uint8_t> encode_png(const Image& image) {
    if (image.channels != 3) fail(ErrorCode::ShapeMismatch, "PNG encoder expects RGB");
    auto pixels = to_rgb8(image);
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
        fail(ErrorCode::EncodeFailed, std::string("PNG size query failed: ") + img.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
        fail(ErrorCode::EncodeFailed, std::string("PNG encode failed: ") + img.message);
    }
    out.resize(size);
    return out;
}

inline Image read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

inline void write_png(const std::filesystem::path& path, const Image& image) {
    write_file_bytes(path, encode_png(image));
}

} // namespace facepose
