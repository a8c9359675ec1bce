#pragma once

#include <stdexcept>
#include <string>

namespace scmkit {

/// Raised for malformed panel CSV input (bad cells, duplicate keys, bad schema).
class PanelError : public std::runtime_error {
 public:
  explicit PanelError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised for invalid study/simulator/CLI configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when an estimator cannot produce a fit (bad inputs, solver failure).
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when placebo inference cannot be carried out (e.g. empty reference set).
class InferenceError : public std::runtime_error {
 public:
  explicit InferenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace scmkit
