#pragma once

// Typed errors shared by all modules. Every failure carries a code so tests
// and the CLI can react to the class of fault, not the message text.

#include <stdexcept>
#include <string>

namespace mockingbird {

enum class ErrorCode {
    // trace model
    EmptyTrace,
    StartsIncoming,
    NonIntegerBurst,
    ZeroSizeOriginal,
    ShrunkBurst,
    InvalidTrace,
    // dataset io
    ParseError,
    LabelOutOfRange,
    ClassTooSmall,
    SingleClassDataset,
    EmptyDataset,
    // detector
    DimensionMismatch,
    UnknownClass,
    BadK,
    FormatError,
    // trace generation
    InsufficientPool,
    AllTargetsDegenerate,
    ZeroDistance,
    BadConfig,
    // evaluation
    LabelMismatch,
    MixedLabels,
    // burst molding
    TargetSmallerThanReal,
    UnorderedEvents,
    // cli / io
    IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyTrace: return "EmptyTrace";
        case ErrorCode::StartsIncoming: return "StartsIncoming";
        case ErrorCode::NonIntegerBurst: return "NonIntegerBurst";
        case ErrorCode::ZeroSizeOriginal: return "ZeroSizeOriginal";
        case ErrorCode::ShrunkBurst: return "ShrunkBurst";
        case ErrorCode::InvalidTrace: return "InvalidTrace";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorCode::ClassTooSmall: return "ClassTooSmall";
        case ErrorCode::SingleClassDataset: return "SingleClassDataset";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::UnknownClass: return "UnknownClass";
        case ErrorCode::BadK: return "BadK";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::InsufficientPool: return "InsufficientPool";
        case ErrorCode::AllTargetsDegenerate: return "AllTargetsDegenerate";
        case ErrorCode::ZeroDistance: return "ZeroDistance";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::LabelMismatch: return "LabelMismatch";
        case ErrorCode::MixedLabels: return "MixedLabels";
        case ErrorCode::TargetSmallerThanReal: return "TargetSmallerThanReal";
        case ErrorCode::UnorderedEvents: return "UnorderedEvents";
        case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

}  // namespace mockingbird
