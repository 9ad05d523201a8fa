#pragma once

#include <stdexcept>
#include <string>

namespace simit {

/// Invalid settings (sizes, class counts, loss wiring).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

/// Bad or inconsistent data (files, shapes, class ids).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

/// Model misuse (shape mismatch, invalid tap locations, undersized inputs).
struct ModelError : std::runtime_error {
  explicit ModelError(const std::string& m) : std::runtime_error(m) {}
};

/// Non-finite values or failed numeric routines.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

/// Command-line misuse; mapped to exit code 2.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace simit
