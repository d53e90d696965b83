#pragma once

#include <stdexcept>
#include <string>

namespace scm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad caller input: shapes, non-finite values, out-of-range parameters.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical kernel failed (e.g. SVD did not converge).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Text input (CSV, config) could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Configuration is well-formed text but semantically invalid.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Requested feature is outside the supported envelope (e.g. MC for d > 3).
class UnsupportedError : public Error {
public:
    using Error::Error;
};

enum class FormatErrorKind { BadMagic, VersionMismatch, Truncated, Checksum, Malformed, Io };

inline const char* to_string(FormatErrorKind kind) {
    switch (kind) {
        case FormatErrorKind::BadMagic: return "bad magic";
        case FormatErrorKind::VersionMismatch: return "version mismatch";
        case FormatErrorKind::Truncated: return "truncated file";
        case FormatErrorKind::Checksum: return "checksum failure";
        case FormatErrorKind::Malformed: return "malformed model";
        case FormatErrorKind::Io: return "i/o error";
    }
    return "unknown";
}

/// Model file could not be decoded. The kind is part of the contract.
class FormatError : public Error {
public:
    FormatError(FormatErrorKind kind, const std::string& detail)
        : Error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

    FormatErrorKind kind() const noexcept { return kind_; }

private:
    FormatErrorKind kind_;
};

}  // namespace scm
