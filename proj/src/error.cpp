#include "neuroevo/error.hpp"

namespace neuroevo {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::EmptyFile: return "EmptyFile";
        case ErrorCode::DegenerateRange: return "DegenerateRange";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NoFlights: return "NoFlights";
        case ErrorCode::FlightTooShort: return "FlightTooShort";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::Empty: return "Empty";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::TruncatedFrame: return "TruncatedFrame";
        case ErrorCode::UnknownKind: return "UnknownKind";
        case ErrorCode::ConfigMismatch: return "ConfigMismatch";
        case ErrorCode::Transport: return "Transport";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace neuroevo
