#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neuroevo {

enum class ErrorCode {
    // flightdata
    MissingColumn,
    ParseError,
    EmptyFile,
    DegenerateRange,
    LengthMismatch,
    NoFlights,
    FlightTooShort,
    // lstm / model files
    DimensionMismatch,
    BadMagic,
    VersionMismatch,
    TruncatedFile,
    ChecksumMismatch,
    // trainer
    Empty,
    NonFiniteGradient,
    // dist
    TruncatedFrame,
    UnknownKind,
    ConfigMismatch,
    Transport,
    // cli / config
    InvalidArgument,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. The code identifies the contract that
/// was violated; the message carries the specifics (column name, row, ...).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace neuroevo
