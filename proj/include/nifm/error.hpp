#pragma once

#include <stdexcept>
#include <string>

namespace nifm {

// Base of every error raised by the library. category() is a short stable
// token used by the CLI for its one-line machine-parsable error report.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

// Shape/axis disagreement between operands.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& what, int axis = -1)
      : Error("dimension", what), axis_(axis) {}

  // Offending axis, or -1 when the mismatch is not tied to a single axis.
  int axis() const noexcept { return axis_; }

 private:
  int axis_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error("domain", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error("io", what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data", what) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& what) : Error("checkpoint", what) {}
};

class GradientError : public Error {
 public:
  explicit GradientError(const std::string& what) : Error("gradient", what) {}
};

}  // namespace nifm
