#pragma once

#include <stdexcept>
#include <string>

namespace camloc {

// Malformed or contradictory input data: bad CSV, shape mismatches,
// out-of-range config values.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration (unknown keys, values outside their domain).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// API misuse: calling into an object whose lifecycle state does not
// permit the operation (e.g. eval-mode batchnorm before any training
// batch has populated the running statistics).
class StateError : public std::logic_error {
public:
    explicit StateError(const std::string& what) : std::logic_error(what) {}
};

// Serialization format problems: bad magic, version mismatch, truncation.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace camloc
