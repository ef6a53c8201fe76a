#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace urbanflow {

enum class ErrorKind {
  InvalidArgument,
  NoOverlap,
  DegenerateInput,
  InsufficientFeatures,
  EstimationFailed,
  InvalidGeometry,
  AmbiguousProjection,
  OutOfRange,
  NumericalFailure,
  InvalidInput,
  Divergence,
  Dependency,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-readable category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace urbanflow
