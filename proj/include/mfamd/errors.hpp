#pragma once

#include <stdexcept>
#include <string>

namespace mfamd {

// Base class for all conditions raised by this library. Every error below is a
// named condition referenced by the operation contracts; callers that want to
// distinguish them catch the subclass, everyone else catches mfamd::Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A categorical cell holds a label that is not in the schema's level list.
struct UnknownLevelError : Error {
  UnknownLevelError(const std::string& variable, const std::string& value)
      : Error("unknown level '" + value + "' for variable '" + variable + "'") {}
};

// Header/schema disagreement: missing column, extra column, duplicate name,
// or a variable spec that is internally inconsistent.
struct SchemaMismatchError : Error {
  using Error::Error;
};

// No usable rows remain after filtering.
struct EmptyDatasetError : Error {
  using Error::Error;
};

// A continuous column is constant, so it cannot be standardized.
struct ZeroVarianceError : Error {
  using Error::Error;
};

// Truncation interval with lower >= upper.
struct InvalidIntervalError : Error {
  using Error::Error;
};

// Covariance (or precision) matrix failed its Cholesky factorization.
struct NonSpdCovarianceError : Error {
  using Error::Error;
};

// A parameter that must be strictly positive is not (sd, shape, scale,
// Dirichlet concentration, probability mass, ...).
struct NonPositiveParameterError : Error {
  using Error::Error;
};

// Shape/size violation in a model input (Q out of range, length mismatch).
struct DimensionError : Error {
  using Error::Error;
};

// Fit cannot continue or be scored: fewer than two retained variables after
// selection, or a cluster stayed empty through the whole sampling phase.
struct DegenerateModelError : Error {
  using Error::Error;
};

// Variance-ratio denominator is zero for a variable.
struct ZeroOverallVarianceError : Error {
  using Error::Error;
};

// Rotation template does not have full column rank, so the orthogonal
// alignment is not unique.
struct RankDeficientTemplateError : Error {
  using Error::Error;
};

// Filesystem / serialization failure.
struct IoError : Error {
  using Error::Error;
};

// Bad or incomplete run configuration.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace mfamd
