#pragma once

#include <stdexcept>
#include <string>

namespace lmpseq {

/// Invalid configuration or argument values (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure: non-convergence, missing bracket, stale inputs (CLI exit code 3).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Problem size exceeds a hard capacity guard (CLI exit code 4).
struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

/// Operation not defined for the given model kind (e.g. non-iid families in grid solvers).
struct UnsupportedModelError : std::runtime_error {
    explicit UnsupportedModelError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace lmpseq
