#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchscale {

/// Malformed or unusable input data (bad rows, missing artifacts, empty groups).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A row of a CSV input that could not be parsed.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& reason)
        : DataError("line " + std::to_string(line) + ": " + reason), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Estimation failed on degenerate data (zero variance, axis-degenerate PCA, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace patchscale
