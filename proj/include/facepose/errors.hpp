#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace facepose {

enum class ErrorCode {
    // pose
    EmptyVideo,
    DetectorFailure,
    EmptyAudio,
    BadSampleRate,
    BadCanvas,
    BadFps,
    NotFound,
    DuplicateId,
    ParseError,
    IoError,
    // conditioning
    NoFace,
    ShapeMismatch,
    OutOfRange,
    // engine
    BadSchedule,
    BadStep,
    BadStepOrder,
    NonFiniteLoss,
    BadConfig,
    BadCheckpoint,
    // service
    InvalidImage,
    UnknownLibraryId,
    PoseExtractionFailed,
    TooLarge,
    UndecodableMedia,
    EncoderUnavailable,
    EncodeFailed,
    InvalidState,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyVideo: return "EmptyVideo";
        case ErrorCode::DetectorFailure: return "DetectorFailure";
        case ErrorCode::EmptyAudio: return "EmptyAudio";
        case ErrorCode::BadSampleRate: return "BadSampleRate";
        case ErrorCode::BadCanvas: return "BadCanvas";
        case ErrorCode::BadFps: return "BadFps";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::NoFace: return "NoFace";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::BadSchedule: return "BadSchedule";
        case ErrorCode::BadStep: return "BadStep";
        case ErrorCode::BadStepOrder: return "BadStepOrder";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::BadCheckpoint: return "BadCheckpoint";
        case ErrorCode::InvalidImage: return "InvalidImage";
        case ErrorCode::UnknownLibraryId: return "UnknownLibraryId";
        case ErrorCode::PoseExtractionFailed: return "PoseExtractionFailed";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::UndecodableMedia: return "UndecodableMedia";
        case ErrorCode::EncoderUnavailable: return "EncoderUnavailable";
        case ErrorCode::EncodeFailed: return "EncodeFailed";
        case ErrorCode::InvalidState: return "InvalidState";
    }
    return "Unknown";
}

/// Every failure raised by the library. `what()` is "<CodeName>: <detail>".
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    std::string_view name() const noexcept { return to_string(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
    throw Error(code, detail);
}

} // namespace facepose
