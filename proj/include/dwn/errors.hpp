#pragma once

/**
 * @file errors.hpp
 * @brief Exception types thrown across the library.
 */

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dwn {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A tensor or bit vector had the wrong length or rank for the operation.
struct InputShapeError : Error {
    using Error::Error;
};

/// A model or run configuration is invalid or inconsistent.
struct ConfigError : Error {
    using Error::Error;
};

/// A mapping index points outside the previous layer's output.
struct MappingRangeError : Error {
    using Error::Error;
};

/// backward() was called without a matching forward() pass.
struct StaleBackwardError : Error {
    using Error::Error;
};

/// Text input (config file, CLI value, CSV cell) could not be parsed.
struct ParseError : Error {
    using Error::Error;
};

/// A name was not found in a registry.
struct LookupError : Error {
    using Error::Error;
};

/// File contents do not match the recorded checksum or row/column counts.
struct IntegrityError : Error {
    using Error::Error;
};

/// Operation requires a frozen model but got a training-mode one.
struct NotFrozenError : Error {
    using Error::Error;
};

/// The model shape cannot be lowered to a gate-level netlist.
struct UnsupportedForNetlist : Error {
    using Error::Error;
};

/// An index or section does not fit the packed file's fixed-width fields.
struct PackingOverflow : Error {
    using Error::Error;
};

/// A packed model file is malformed. Carries the byte offset of the fault.
struct FormatError : Error {
    FormatError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

  private:
    std::size_t offset_;
};

/// Training produced a non-finite loss or gradient.
struct NumericalDivergence : Error {
    using Error::Error;
};

} // namespace dwn
