#pragma once

#include <stdexcept>
#include <string>

namespace jmorph {

// File/format problems: bad headers, truncated payloads, unwritable paths.
struct IoError : std::runtime_error {
  explicit IoError(const std::string &msg) : std::runtime_error(msg) {}
};

// A domain invariant was violated (NaN data, negative spacing, ...).
struct InvariantError : std::runtime_error {
  explicit InvariantError(const std::string &msg) : std::runtime_error(msg) {}
};

// Bad user-facing configuration (unknown enum value, missing path, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace jmorph
