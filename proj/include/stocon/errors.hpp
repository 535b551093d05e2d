#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stocon {

enum class ErrorKind {
  kNotPositiveDefinite,
  kNotSymmetric,
  kNonFinite,
  kSingularTheta,
  kMetricMismatch,
  kNonConstantMetric,
  kMissingCouplingBound,
  kDimensionMismatch,
  kLaplacianNotDiffusive,
  kInvalidArgument,
  kConfig,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::kNotSymmetric: return "NotSymmetric";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kSingularTheta: return "SingularTheta";
    case ErrorKind::kMetricMismatch: return "MetricMismatch";
    case ErrorKind::kNonConstantMetric: return "NonConstantMetric";
    case ErrorKind::kMissingCouplingBound: return "MissingCouplingBound";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kLaplacianNotDiffusive: return "LaplacianNotDiffusive";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kConfig: return "ConfigError";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. The kind tag lets
/// callers (the CLI in particular) map failures to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when an integration step produces NaN/Inf. `path_index` is -1 when
/// the failing step was not part of an ensemble.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::int64_t path_index, double time, const std::string& what)
      : Error(ErrorKind::kNonFinite,
              what + " (path " + std::to_string(path_index) + ", t=" +
                  std::to_string(time) + ")"),
        path_index_(path_index),
        time_(time) {}

  std::int64_t path_index() const noexcept { return path_index_; }
  double time() const noexcept { return time_; }

 private:
  std::int64_t path_index_;
  double time_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace stocon
