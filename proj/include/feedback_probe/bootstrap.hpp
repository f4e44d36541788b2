#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "feedback_probe/basis.hpp"
#include "feedback_probe/error.hpp"
#include "feedback_probe/estimator.hpp"
#include "feedback_probe/noise.hpp"
#include "feedback_probe/parallel.hpp"

namespace feedback_probe {

struct BootstrapConfig {
  BasisSpec mu_basis;
  BasisSpec f_basis;
  NoiseSpec noise;
  FeedbackFitOptions options;
  /// 200 for stable SEs; 10 reproduces the small-B setting but is noisy.
  std::size_t replicates = 200;
  std::uint64_t seed = 1;
  std::size_t threads = replicate_threads();
  double max_failure_fraction = 0.2;
};

struct BootstrapBands {
  std::size_t replicates = 0;
  std::vector<double> grid;
  /// Per-gridpoint standard deviation across replicate curves.
  std::vector<double> pointwise_se;
  DenseMatrix replicate_curves;
  /// Replicates that failed a rank check and were redrawn.
  std::size_t failures = 0;
};

/// Resamples (prior, noise, next) triples with replacement, refits trend and
/// feedback on each resample, and takes pointwise SDs of the f_hat curves.
inline BootstrapBands bootstrap_feedback(const ObservationSet& obs, const BootstrapConfig& config) {
  if (config.replicates < 2) throw ConfigError("bootstrap: replicates must be >= 2");
  obs.validate();
  config.options.grid.validate();
  const std::size_t n = obs.size();
  const std::size_t b_count = config.replicates;
  const auto max_failures =
      static_cast<std::size_t>(std::floor(config.max_failure_fraction * static_cast<double>(b_count)));

  FeedbackFitOptions options = config.options;
  if (!options.convolved) {
    // Resampled priors never leave the full-data range, so one table serves every replicate.
    const auto [lo, hi] = value_range(obs.prior);
    options.convolved =
        std::make_shared<ConvolvedBasis>(config.f_basis, config.noise, lo, hi, options.convolution);
  }

  const std::size_t grid_count = options.grid.count;
  std::vector<std::vector<double>> curves(b_count);
  std::vector<std::size_t> failures(b_count, 0);
  parallel_for(
      b_count,
      [&](std::size_t r) {
        const std::uint64_t replicate_seed = derive_seed(config.seed, r);
        for (std::size_t attempt = 0;; ++attempt) {
          Rng rng(mix_seed(derive_seed(replicate_seed, attempt)));
          std::uniform_int_distribution<std::size_t> pick(0, n - 1);
          std::vector<std::size_t> rows(n);
          for (auto& i : rows) i = pick(rng);
          try {
            const auto fit = fit_two_stage(obs.subset(rows), config.mu_basis, config.f_basis, config.noise, options);
            curves[r] = fit.feedback.evaluation.values;
            return;
          } catch (const NumericalError&) {
            ++failures[r];
            if (failures[r] > max_failures) return;
          }
        }
      },
      config.threads);

  BootstrapBands bands;
  bands.replicates = b_count;
  bands.grid = options.grid.points();
  for (std::size_t f : failures) bands.failures += f;
  if (bands.failures > max_failures) {
    throw BootstrapError("bootstrap: " + std::to_string(bands.failures) + " of " + std::to_string(b_count) +
                         " replicates failed rank checks (limit " + std::to_string(max_failures) +
                         "); the noise contrast is too weak for this basis");
  }

  bands.replicate_curves = DenseMatrix(b_count, grid_count);
  for (std::size_t r = 0; r < b_count; ++r)
    for (std::size_t k = 0; k < grid_count; ++k) bands.replicate_curves(r, k) = curves[r][k];

  bands.pointwise_se.assign(grid_count, 0.0);
  for (std::size_t k = 0; k < grid_count; ++k) {
    double m = 0.0;
    for (std::size_t r = 0; r < b_count; ++r) m += curves[r][k];
    m /= static_cast<double>(b_count);
    double ss = 0.0;
    for (std::size_t r = 0; r < b_count; ++r) ss += (curves[r][k] - m) * (curves[r][k] - m);
    bands.pointwise_se[k] = std::sqrt(ss / static_cast<double>(b_count - 1));
  }
  return bands;
}

}  // namespace feedback_probe
