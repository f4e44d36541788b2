#pragma once

#include <cmath>
#include <numbers>

#include "feedback_probe/error.hpp"

namespace feedback_probe {

inline void require_positive_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DomainError("gaussian: sigma must be positive and finite");
  }
}

/// Density of N(0, sigma^2) at x.
inline double gaussian_pdf(double x, double sigma) {
  require_positive_sigma(sigma);
  const double z = x / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// CDF of N(0, sigma^2) at x; erfc keeps the lower tail accurate.
inline double gaussian_cdf(double x, double sigma) {
  require_positive_sigma(sigma);
  return 0.5 * std::erfc(-x / (sigma * std::numbers::sqrt2));
}

}  // namespace feedback_probe
