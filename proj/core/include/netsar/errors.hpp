#pragma once

#include <stdexcept>
#include <string>

namespace netsar {

/// Invalid configuration or malformed input file. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Geometric or statistical infeasibility discovered at run time. CLI exit code 3.
struct FeasibilityError : std::runtime_error {
    explicit FeasibilityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (degenerate geometry, flat image, disconnected graph, ...).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace netsar
