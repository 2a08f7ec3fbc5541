#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmrl {

// Invalid argument values (bad dimensions, ratios out of range, ...).
struct ValueError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Tensor shape or architecture incompatibilities.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// File system failures and malformed files (bad magic, CRC, truncation).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training loss became non-finite.
struct DivergenceError : std::runtime_error {
    DivergenceError(std::size_t epoch, std::string term, const std::string& msg)
        : std::runtime_error(msg), epoch(epoch), term(std::move(term)) {}

    std::size_t epoch;
    std::string term;
};

}  // namespace mmrl
