#pragma once

#include <stdexcept>
#include <string>

namespace mobound {

// Three error families, each mapped to a distinct CLI exit code.

/// Bad flags, unknown loss strings, malformed configuration.
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or inconsistent input data (CSV, JSON, labels, dimensions).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A formula evaluated outside its mathematical domain (n < 3 for log log n,
/// theta outside [0, 1/2], infinite range bound, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace mobound
