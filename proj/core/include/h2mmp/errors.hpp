#pragma once

#include <stdexcept>
#include <string>

namespace h2mmp {

/// Invalid user-facing configuration (bad family parameters, bad tolerances, ...).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Kernel matrix assembly failed (e.g. duplicate points).
class AssemblyError : public std::runtime_error {
 public:
  explicit AssemblyError(const std::string& what) : std::runtime_error(what) {}
};

/// An internal consistency condition was violated. Indicates a bug, not bad input.
class InvariantError : public std::logic_error {
 public:
  explicit InvariantError(const std::string& what) : std::logic_error(what) {}
};

/// Malformed or truncated h2json input.
class LoadError : public std::runtime_error {
 public:
  explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace h2mmp
