#pragma once

#include <stdexcept>
#include <string>

namespace conestable {

/// Base of every error raised by the library. `code()` is a short stable tag
/// that the CLI copies into its structured error record.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Parameter outside its mathematical domain (alpha, rho, negative time, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error("domain", what) {}
};

/// Geometric precondition violated (point outside the cone, zero vector, ...).
class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error("geometry", what) {}
};

/// Estimator cannot produce a meaningful answer from the data it was given
/// (degenerate fit window, too few counts, ESS below threshold, ...).
class EstimationError : public Error {
 public:
  explicit EstimationError(const std::string& what) : Error("estimation", what) {}
};

}  // namespace conestable
