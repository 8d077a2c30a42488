#pragma once

#include <stdexcept>
#include <string>

namespace apot {

// Error taxonomy shared by the library and the CLI. Each class maps to a
// distinct process exit code in the CLI (see tools/cli_main.cpp).

/// Invalid bit-width / scheme / threshold combination.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Bad input data: non-finite values, empty arrays, negative activations...
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// API misuse, e.g. a backward pass fed a cache that does not match.
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

/// Accumulator overflow or a diverged training run.
class ArithmeticError : public std::runtime_error {
 public:
  explicit ArithmeticError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace apot
