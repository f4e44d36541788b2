#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace feedback_probe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameter (bad basis spec, sigma <= 0, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data failed validation (non-finite value, size mismatch).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::size_t index = npos)
      : Error(what), index_(index) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Observation log row violates deployed = prior + noise or period layout.
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Base for numerical failures (exit code 4 in the CLI).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class RankDeficiencyError : public NumericalError {
 public:
  RankDeficiencyError(const std::string& what, std::size_t column)
      : NumericalError(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Noise vector has (numerically) zero variance.
class DegenerateInstrumentError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Feedback design matrix is rank deficient for the given noise scale.
class DegenerateContrastError : public NumericalError {
 public:
  DegenerateContrastError(const std::string& what, double sigma_nu, std::size_t dimension)
      : NumericalError(what), sigma_nu_(sigma_nu), dimension_(dimension) {}
  double sigma_nu() const noexcept { return sigma_nu_; }
  std::size_t dimension() const noexcept { return dimension_; }

 private:
  double sigma_nu_;
  std::size_t dimension_;
};

class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Too many bootstrap replicates failed their rank checks.
class BootstrapError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace feedback_probe
