#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pathaug {

enum class ErrorCode {
    IoError,
    DecodeError,
    OutOfBounds,
    WrongSpace,
    InsufficientData,
    SpaceMismatch,
    DegenerateComponent,
    SchemaError,
    ModelMissingSpace,
    TooSmall,
    DuplicateLevel,
    EmptyCorpus,
    ConfigError,
    ShapeError,
};

// Stable identifiers; the CLI prefixes every diagnostic with one of these.
constexpr std::string_view error_code_name(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::IoError: return "E_IO";
    case ErrorCode::DecodeError: return "E_DECODE";
    case ErrorCode::OutOfBounds: return "E_OUT_OF_BOUNDS";
    case ErrorCode::WrongSpace: return "E_WRONG_SPACE";
    case ErrorCode::InsufficientData: return "E_INSUFFICIENT_DATA";
    case ErrorCode::SpaceMismatch: return "E_SPACE_MISMATCH";
    case ErrorCode::DegenerateComponent: return "E_DEGENERATE_COMPONENT";
    case ErrorCode::SchemaError: return "E_SCHEMA";
    case ErrorCode::ModelMissingSpace: return "E_MODEL_MISSING_SPACE";
    case ErrorCode::TooSmall: return "E_TOO_SMALL";
    case ErrorCode::DuplicateLevel: return "E_DUPLICATE_LEVEL";
    case ErrorCode::EmptyCorpus: return "E_EMPTY_CORPUS";
    case ErrorCode::ConfigError: return "E_CONFIG";
    case ErrorCode::ShapeError: return "E_SHAPE";
    }
    return "E_UNKNOWN";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace pathaug
