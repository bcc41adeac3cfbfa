#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace solarsr {

enum class ErrorCode {
    MalformedFile,
    UnsupportedBitpix,
    NotAnImage,
    MissingKeyword,
    HeaderOverflow,
    InvalidMetadata,
    InsufficientOverlap,
    DegenerateImage,
    EmptyValidRegion,
    TooFewKeypoints,
    InsufficientMatches,
    NoConsensus,
    ResidualTooLow,
    ShapeMismatch,
    IncompatibleCheckpoint,
    AlphaOutOfRange,
    BadMagic,
    VersionUnsupported,
    CorruptDirectory,
    NonFiniteInput,
    EmptyInput,
    InvalidRegionPresent,
    IncompatibleShapes,
    EmptyInputs,
    InvalidArgument,
    ConfigError,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MalformedFile: return "MalformedFile";
        case ErrorCode::UnsupportedBitpix: return "UnsupportedBitpix";
        case ErrorCode::NotAnImage: return "NotAnImage";
        case ErrorCode::MissingKeyword: return "MissingKeyword";
        case ErrorCode::HeaderOverflow: return "HeaderOverflow";
        case ErrorCode::InvalidMetadata: return "InvalidMetadata";
        case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
        case ErrorCode::DegenerateImage: return "DegenerateImage";
        case ErrorCode::EmptyValidRegion: return "EmptyValidRegion";
        case ErrorCode::TooFewKeypoints: return "TooFewKeypoints";
        case ErrorCode::InsufficientMatches: return "InsufficientMatches";
        case ErrorCode::NoConsensus: return "NoConsensus";
        case ErrorCode::ResidualTooLow: return "ResidualTooLow";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
        case ErrorCode::AlphaOutOfRange: return "AlphaOutOfRange";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionUnsupported: return "VersionUnsupported";
        case ErrorCode::CorruptDirectory: return "CorruptDirectory";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::InvalidRegionPresent: return "InvalidRegionPresent";
        case ErrorCode::IncompatibleShapes: return "IncompatibleShapes";
        case ErrorCode::EmptyInputs: return "EmptyInputs";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI error summary) can dispatch without parsing text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    /// The message without the code prefix.
    [[nodiscard]] const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace solarsr
