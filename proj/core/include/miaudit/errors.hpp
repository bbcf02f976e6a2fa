#pragma once

#include <stdexcept>
#include <string>

namespace miaudit {

// Invalid user-supplied configuration. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible shapes passed to a numeric operation.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or truncated input file.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// An attack was invoked without the models it needs.
struct ContextError : std::runtime_error {
    explicit ContextError(const std::string& what) : std::runtime_error(what) {}
};

// Training or an iterative solver produced a non-finite value.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace miaudit
