#pragma once

#include <stdexcept>
#include <string>

namespace huntbranch {

/// Invalid model or law parameters (negative rates, bad pmf, ...).
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Eigen-triple extraction or consistency failure.
class SpectralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Statistical experiment cannot produce a verdict.
class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run specification violates the schema. `path` names the offending field.
class SpecError : public std::runtime_error {
 public:
  SpecError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace huntbranch
