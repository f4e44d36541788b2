#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "feedback_probe/error.hpp"
#include "feedback_probe/noise.hpp"
#include "feedback_probe/numeric/convolution.hpp"
#include "feedback_probe/numeric/dense_matrix.hpp"
#include "feedback_probe/numeric/grid_function.hpp"

namespace feedback_probe {

/// Intercept, natural cubic spline and jump-indicator columns, in that order.
struct BasisSpec {
  std::size_t spline_df = 0;
  double knot_low = -3.0;
  double knot_high = 3.0;
  std::vector<double> jump_locations;
  bool include_intercept = false;

  std::size_t dimension() const noexcept {
    return (include_intercept ? 1 : 0) + spline_df + jump_locations.size();
  }

  void validate() const {
    if (spline_df > 0 && !(knot_low < knot_high && std::isfinite(knot_low) && std::isfinite(knot_high))) {
      throw ConfigError("basis: knot interval must satisfy low < high");
    }
    for (double c : jump_locations) {
      if (!std::isfinite(c)) throw ConfigError("basis: jump locations must be finite");
    }
    if (dimension() == 0) throw ConfigError("basis: dimension must be at least 1");
  }

  /// Feedback bases must not carry an intercept; f is only identified up to a constant.
  void validate_feedback_role() const {
    validate();
    if (include_intercept) throw ConfigError("f_basis: the feedback basis must not include an intercept");
  }

  std::vector<double> knots() const {
    std::vector<double> k(spline_df + 1);
    for (std::size_t i = 0; i <= spline_df; ++i) {
      k[i] = knot_low + (knot_high - knot_low) * static_cast<double>(i) / static_cast<double>(spline_df);
    }
    return k;
  }

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

/// Evaluated basis: one row per evaluation point.
struct BasisMatrix {
  BasisSpec spec;
  DenseMatrix matrix;
  std::vector<double> evaluation_points;
  /// Set when there are fewer distinct points than basis columns.
  bool rank_warning = false;
};

namespace detail {

inline bool too_few_distinct(std::span<const double> points, std::size_t dimension) {
  std::set<double> distinct;
  for (double p : points) {
    distinct.insert(p);
    if (distinct.size() >= dimension) return false;
  }
  return distinct.size() < dimension;
}

inline double cube_plus(double x) { return x > 0.0 ? x * x * x : 0.0; }

/// Natural cubic spline columns at x (truncated-power form, linear outside
/// the boundary knots). The cubic columns are divided by span^2 so that all
/// columns have comparable magnitude.
inline void natural_spline_row(const std::vector<double>& knots, double x, std::span<double> out) {
  const std::size_t k_count = knots.size();
  out[0] = x;
  if (k_count <= 2) return;
  const double last = knots.back();
  const double span2 = (last - knots.front()) * (last - knots.front());
  auto d = [&](std::size_t k) {
    return (cube_plus(x - knots[k]) - cube_plus(x - last)) / (last - knots[k]);
  };
  const double d_last = d(k_count - 2);
  for (std::size_t k = 0; k + 2 < k_count; ++k) out[k + 1] = (d(k) - d_last) / span2;
}

}  // namespace detail

inline BasisMatrix natural_spline_basis(const BasisSpec& spec, std::span<const double> points) {
  if (spec.spline_df < 1) throw ConfigError("natural_spline_basis: spline_df must be >= 1");
  BasisSpec spline_only{spec.spline_df, spec.knot_low, spec.knot_high, {}, false};
  spline_only.validate();
  const auto knots = spline_only.knots();
  DenseMatrix m(points.size(), spec.spline_df);
  for (std::size_t i = 0; i < points.size(); ++i) detail::natural_spline_row(knots, points[i], m.row(i));
  return {spline_only, std::move(m), {points.begin(), points.end()},
          detail::too_few_distinct(points, spec.spline_df)};
}

/// Column j is 1{point > locations[j]} (strict).
inline BasisMatrix jump_basis(std::span<const double> locations, std::span<const double> points) {
  DenseMatrix m(points.size(), locations.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < locations.size(); ++j) m(i, j) = points[i] > locations[j] ? 1.0 : 0.0;
  BasisSpec spec;
  spec.jump_locations.assign(locations.begin(), locations.end());
  return {spec, std::move(m), {points.begin(), points.end()}, false};
}

inline BasisMatrix eval_basis(const BasisSpec& spec, std::span<const double> points) {
  spec.validate();
  std::vector<DenseMatrix> blocks;
  if (spec.include_intercept) blocks.emplace_back(points.size(), 1, 1.0);
  if (spec.spline_df > 0) blocks.push_back(natural_spline_basis(spec, points).matrix);
  if (!spec.jump_locations.empty()) blocks.push_back(jump_basis(spec.jump_locations, points).matrix);
  return {spec, DenseMatrix::hconcat(blocks), {points.begin(), points.end()},
          detail::too_few_distinct(points, spec.dimension())};
}

/// Grid resolution for the FFT convolution, in units of the noise SD.
struct ConvolutionGridOptions {
  double step_per_sigma = 1.0 / 512.0;
  double padding_sigmas = 6.0;
};

/// phi_N * b for every column of a basis, tabulated once over [low, high]
/// and evaluated anywhere inside by linear interpolation.
///
/// Gaussian noise goes through fft_convolve_grid. Each jump column gets its
/// own grid with the jump on a node carrying the midpoint value 1/2, which
/// keeps the discrete convolution second-order accurate across the
/// discontinuity. Rademacher noise is evaluated exactly as the two-point
/// average (b(y + eps) + b(y - eps)) / 2.
class ConvolvedBasis {
 public:
  ConvolvedBasis(BasisSpec spec, NoiseSpec noise, double low, double high,
                 ConvolutionGridOptions options = {})
      : spec_(std::move(spec)), noise_(noise), low_(low), high_(high), options_(options) {
    spec_.validate();
    noise_.validate();
    if (!(low <= high) || !std::isfinite(low) || !std::isfinite(high)) {
      throw ConfigError("ConvolvedBasis: invalid range");
    }
    if (noise_.is_gaussian()) build_gaussian_tables();
  }

  const BasisSpec& spec() const noexcept { return spec_; }
  const NoiseSpec& noise() const noexcept { return noise_; }
  double low() const noexcept { return low_; }
  double high() const noexcept { return high_; }

  BasisMatrix evaluate(std::span<const double> points) const {
    const std::size_t n = points.size();
    DenseMatrix m(n, spec_.dimension());
    std::size_t col = 0;
    if (spec_.include_intercept) {
      // A unit-mass kernel maps constants to themselves.
      for (std::size_t i = 0; i < n; ++i) m(i, col) = 1.0;
      ++col;
    }
    if (noise_.is_gaussian()) {
      for (const auto& g : tables_) {
        const auto v = interp_linear(g, points);
        for (std::size_t i = 0; i < n; ++i) m(i, col) = v[i];
        ++col;
      }
    } else {
      const double eps = noise_.scale();
      std::vector<double> up(points.begin(), points.end());
      std::vector<double> down(points.begin(), points.end());
      for (auto& v : up) v += eps;
      for (auto& v : down) v -= eps;
      BasisSpec no_intercept = spec_;
      no_intercept.include_intercept = false;
      if (no_intercept.dimension() > 0) {
        const auto bu = eval_basis(no_intercept, up).matrix;
        const auto bd = eval_basis(no_intercept, down).matrix;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < bu.cols(); ++j) m(i, col + j) = 0.5 * (bu(i, j) + bd(i, j));
      }
    }
    return {spec_, std::move(m), {points.begin(), points.end()},
            detail::too_few_distinct(points, spec_.dimension())};
  }

 private:
  void build_gaussian_tables() {
    const double sigma = noise_.scale();
    const double h = sigma * options_.step_per_sigma;
    const auto kernel = ConvolutionKernel::gaussian(sigma, options_.padding_sigmas);
    const auto m = static_cast<std::size_t>(std::llround(kernel.halfwidth / h));
    const double base_start = low_ - static_cast<double>(m + 2) * h;
    const auto count = static_cast<std::size_t>(std::ceil((high_ - low_) / h)) + 2 * (m + 2) + 2;

    if (spec_.spline_df > 0) {
      std::vector<double> grid(count);
      for (std::size_t k = 0; k < count; ++k) grid[k] = base_start + static_cast<double>(k) * h;
      const auto sampled = natural_spline_basis(spec_, grid).matrix;
      for (std::size_t j = 0; j < spec_.spline_df; ++j) {
        tables_.push_back(fft_convolve_grid(GridFunction(base_start, h, sampled.column(j)), kernel));
      }
    }
    for (double c : spec_.jump_locations) {
      const long long k0 = std::llround((c - base_start) / h);
      const double start = c - static_cast<double>(k0) * h;
      std::vector<double> v(count);
      for (std::size_t k = 0; k < count; ++k) {
        const auto kk = static_cast<long long>(k);
        v[k] = kk == k0 ? 0.5 : (kk > k0 ? 1.0 : 0.0);
      }
      tables_.push_back(fft_convolve_grid(GridFunction(start, h, std::move(v)), kernel));
    }
  }

  BasisSpec spec_;
  NoiseSpec noise_;
  double low_;
  double high_;
  ConvolutionGridOptions options_;
  std::vector<GridFunction> tables_;
};

inline std::pair<double, double> value_range(std::span<const double> points) {
  if (points.empty()) throw ValidationError("value_range: empty input");
  const auto [lo, hi] = std::minmax_element(points.begin(), points.end());
  return {*lo, *hi};
}

/// phi_{sigma_nu} * b evaluated at the points (Gaussian noise).
inline BasisMatrix convolved_basis(const BasisSpec& spec, double sigma_nu, std::span<const double> points,
                                   ConvolutionGridOptions options = {}) {
  if (!(sigma_nu > 0.0)) throw DomainError("convolved_basis: sigma_nu must be positive");
  const auto [lo, hi] = value_range(points);
  return ConvolvedBasis(spec, NoiseSpec::gaussian(sigma_nu), lo, hi, options).evaluate(points);
}

}  // namespace feedback_probe
