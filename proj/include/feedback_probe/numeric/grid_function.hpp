#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "feedback_probe/error.hpp"

namespace feedback_probe {

/// A function sampled at start + k * step, k = 0 .. values.size() - 1.
struct GridFunction {
  double start = 0.0;
  double step = 1.0;
  std::vector<double> values;

  GridFunction() = default;
  GridFunction(double grid_start, double grid_step, std::vector<double> samples)
      : start(grid_start), step(grid_step), values(std::move(samples)) {
    validate();
  }

  template <typename F>
  static GridFunction sample(double grid_start, double grid_step, std::size_t count, F&& f) {
    std::vector<double> v(count);
    for (std::size_t k = 0; k < count; ++k) v[k] = f(grid_start + static_cast<double>(k) * grid_step);
    return GridFunction(grid_start, grid_step, std::move(v));
  }

  void validate() const {
    if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("GridFunction: step must be > 0");
    if (!std::isfinite(start)) throw ConfigError("GridFunction: start must be finite");
    if (values.size() < 2) throw ConfigError("GridFunction: need at least two samples");
  }

  std::size_t size() const noexcept { return values.size(); }
  double point(std::size_t k) const noexcept { return start + static_cast<double>(k) * step; }
  double end() const noexcept { return point(values.size() - 1); }
};

/// Piecewise-linear interpolation; no extrapolation outside [start, end].
inline std::vector<double> interp_linear(const GridFunction& g, std::span<const double> query) {
  g.validate();
  const double last = g.end();
  const double slack = 1e-9 * g.step;
  const std::size_t n = g.values.size();
  std::vector<double> out(query.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    const double x = query[q];
    if (!(x >= g.start - slack && x <= last + slack)) {
      throw OutOfRangeError("interp_linear: query " + std::to_string(x) + " outside grid [" +
                            std::to_string(g.start) + ", " + std::to_string(last) + "]");
    }
    const double u = (x - g.start) / g.step;
    const double nearest = std::round(u);
    if (std::abs(u - nearest) <= 1e-9) {
      const auto k = static_cast<std::size_t>(std::clamp(nearest, 0.0, static_cast<double>(n - 1)));
      out[q] = g.values[k];
      continue;
    }
    auto k = static_cast<std::size_t>(std::floor(u));
    if (k >= n - 1) k = n - 2;
    const double t = u - static_cast<double>(k);
    out[q] = g.values[k] + t * (g.values[k + 1] - g.values[k]);
  }
  return out;
}

}  // namespace feedback_probe
