#pragma once

#include <stdexcept>
#include <string>

namespace typobench {

/// Bad config file, bad manifest, bad CLI usage. CLI maps this to exit 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Input data violates a schema or an invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Endpoint unreachable / credentials missing after retries. CLI exit 4.
class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace typobench
