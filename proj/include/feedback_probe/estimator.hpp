#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "feedback_probe/basis.hpp"
#include "feedback_probe/error.hpp"
#include "feedback_probe/noise.hpp"
#include "feedback_probe/numeric/dense_matrix.hpp"
#include "feedback_probe/numeric/grid_function.hpp"
#include "feedback_probe/numeric/least_squares.hpp"

namespace feedback_probe {

/// Aligned (prior prediction, injected noise, next prediction) records.
struct ObservationSet {
  std::vector<double> prior;
  std::vector<double> noise;
  std::vector<double> next;

  std::size_t size() const noexcept { return prior.size(); }

  void validate(std::size_t min_size = 3) const {
    if (noise.size() != prior.size() || next.size() != prior.size()) {
      throw ValidationError("observations: prior, noise and next must have equal length");
    }
    if (prior.size() < min_size) {
      throw ValidationError("observations: need at least " + std::to_string(min_size) + " rows, got " +
                            std::to_string(prior.size()));
    }
    for (std::size_t i = 0; i < prior.size(); ++i) {
      if (!std::isfinite(prior[i]) || !std::isfinite(noise[i]) || !std::isfinite(next[i])) {
        throw ValidationError("observations: non-finite value in row " + std::to_string(i), i);
      }
    }
  }

  std::vector<double> deployed() const {
    std::vector<double> d(size());
    for (std::size_t i = 0; i < size(); ++i) d[i] = prior[i] + noise[i];
    return d;
  }

  ObservationSet subset(std::span<const std::size_t> rows) const {
    ObservationSet s;
    s.prior.reserve(rows.size());
    s.noise.reserve(rows.size());
    s.next.reserve(rows.size());
    for (std::size_t r : rows) {
      s.prior.push_back(prior[r]);
      s.noise.push_back(noise[r]);
      s.next.push_back(next[r]);
    }
    return s;
  }
};

namespace stats {

inline double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample covariance with the n - 1 denominator.
inline double covariance(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(x.size() - 1);
}

inline double variance(std::span<const double> x) { return covariance(x, x); }

}  // namespace stats

// ---------------------------------------------------------------------------
// Linear feedback f(y) = beta * y

enum class LinearVariant { simple, conditioned };

struct LinearFeedbackFit {
  double beta_hat = 0.0;
  double standard_error = 0.0;
  LinearVariant variant = LinearVariant::simple;
  /// Mean of next - beta_hat * deployed: the constant c of the IV second stage.
  double residual_mean = 0.0;
  /// Sample variance of next - beta_hat * noise.
  double residual_variance = 0.0;
};

namespace detail {

inline LinearFeedbackFit regress_on_noise(std::span<const double> response, const ObservationSet& obs,
                                          LinearVariant variant) {
  const std::size_t n = obs.size();
  const double var_noise = stats::variance(obs.noise);
  if (!(var_noise > 0.0)) {
    throw DegenerateInstrumentError("linear feedback: injected noise has zero variance");
  }
  LinearFeedbackFit fit;
  fit.variant = variant;
  fit.beta_hat = stats::covariance(response, obs.noise) / var_noise;
  std::vector<double> resid(n);
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    resid[i] = response[i] - fit.beta_hat * obs.noise[i];
    c += response[i] - fit.beta_hat * (obs.prior[i] + obs.noise[i]);
  }
  fit.residual_mean = c / static_cast<double>(n);
  fit.residual_variance = stats::variance(resid);
  fit.standard_error = std::sqrt(fit.residual_variance / (static_cast<double>(n) * var_noise));
  return fit;
}

}  // namespace detail

/// beta_hat = Cov(next, noise) / Var(noise), treating everything else as noise.
inline LinearFeedbackFit fit_linear_simple(const ObservationSet& obs) {
  obs.validate();
  return detail::regress_on_noise(obs.next, obs, LinearVariant::simple);
}

// ---------------------------------------------------------------------------
// Conditional mean trend mu(y) = E[next | prior = y]

struct TrendFit {
  BasisSpec basis;
  std::vector<double> coefficients;
  /// Sandwich (heteroscedasticity-robust) covariance of the coefficients.
  DenseMatrix coefficient_covariance;
  DenseMatrix classical_covariance;

  std::vector<double> evaluate(std::span<const double> points) const {
    return eval_basis(basis, points).matrix.multiply(coefficients);
  }

  /// mu == 0, as an intercept-only trend with a zero coefficient.
  static TrendFit zero() {
    TrendFit t;
    t.basis.include_intercept = true;
    t.coefficients = {0.0};
    t.coefficient_covariance = DenseMatrix(1, 1);
    t.classical_covariance = DenseMatrix(1, 1);
    return t;
  }
};

inline TrendFit fit_mean_trend(const ObservationSet& obs, const BasisSpec& mu_basis) {
  mu_basis.validate();
  if (!mu_basis.include_intercept) throw ConfigError("mu_basis: the trend basis must include an intercept");
  obs.validate(mu_basis.dimension() + 1);
  const auto design = eval_basis(mu_basis, obs.prior).matrix;
  auto ls = solve_least_squares(design, obs.next);
  return {mu_basis, std::move(ls.coefficients), std::move(ls.coefficient_covariance_sandwich),
          std::move(ls.coefficient_covariance_classical)};
}

/// Same as fit_linear_simple but on next - mu_hat(prior).
inline LinearFeedbackFit fit_linear_conditioned(const ObservationSet& obs, const TrendFit& trend) {
  obs.validate();
  const auto mu = trend.evaluate(obs.prior);
  std::vector<double> adjusted(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) adjusted[i] = obs.next[i] - mu[i];
  return detail::regress_on_noise(adjusted, obs, LinearVariant::conditioned);
}

// ---------------------------------------------------------------------------
// Non-linear feedback f(y) = beta_f . b_f(y)

struct ReportingGrid {
  double low = -3.0;
  double high = 3.0;
  std::size_t count = 201;

  std::vector<double> points() const {
    std::vector<double> x(count);
    for (std::size_t k = 0; k < count; ++k) x[k] = low + step() * static_cast<double>(k);
    return x;
  }
  double step() const { return (high - low) / static_cast<double>(count - 1); }
  void validate() const {
    if (!(low < high) || count < 2) throw ConfigError("reporting grid: need low < high and >= 2 points");
  }
};

enum class CovarianceKind { sandwich, classical, full };

struct FeedbackFitOptions {
  ReportingGrid grid;
  ConvolutionGridOptions convolution;
  CovarianceKind covariance = CovarianceKind::sandwich;
  /// Split-sample mode: trend on even rows, feedback on odd rows.
  bool split_sample = false;
  /// Optional precomputed phi_N * b_f table, reused across bootstrap replicates.
  std::shared_ptr<const ConvolvedBasis> convolved;
};

struct FeedbackFit {
  BasisSpec basis;
  std::vector<double> coefficients;
  /// Covariance used for pointwise_se (kind given by covariance_kind).
  DenseMatrix coefficient_covariance;
  DenseMatrix sandwich_covariance;
  DenseMatrix classical_covariance;
  CovarianceKind covariance_kind = CovarianceKind::sandwich;
  /// f_hat(y) = beta_f . b_f(y) - intercept_offset.
  double intercept_offset = 0.0;
  /// Mean of b_f over the normalization priors.
  std::vector<double> basis_mean;
  GridFunction evaluation;
  std::vector<double> pointwise_se;
  std::vector<double> residuals;
  double noise_scale = 0.0;

  std::vector<double> evaluate(std::span<const double> points) const {
    auto v = eval_basis(basis, points).matrix.multiply(coefficients);
    for (double& e : v) e -= intercept_offset;
    return v;
  }

  std::vector<double> grid_points() const {
    std::vector<double> x(evaluation.size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = evaluation.point(k);
    return x;
  }

  /// sqrt((b(x) - b_mean)' V (b(x) - b_mean)) on the reporting grid.
  std::vector<double> pointwise_se_for(const DenseMatrix& covariance) const {
    const auto x = grid_points();
    const auto b = eval_basis(basis, x).matrix;
    std::vector<double> se(x.size());
    std::vector<double> u(basis.dimension());
    for (std::size_t k = 0; k < x.size(); ++k) {
      for (std::size_t j = 0; j < u.size(); ++j) u[j] = b(k, j) - basis_mean[j];
      se[k] = std::sqrt(std::max(0.0, quadratic_form(covariance, u)));
    }
    return se;
  }
};

/// The feedback regression problem: response = next - mu_hat(prior),
/// contrast rows b_f(prior + noise) - (phi_N * b_f)(prior).
struct FeedbackDesign {
  DenseMatrix contrast;
  std::vector<double> response;
};

inline FeedbackDesign build_feedback_design(const ObservationSet& obs, const TrendFit& trend,
                                            const ConvolvedBasis& convolved) {
  const auto deployed = obs.deployed();
  const auto direct = eval_basis(convolved.spec(), deployed).matrix;
  const auto smoothed = convolved.evaluate(obs.prior).matrix;
  DenseMatrix contrast(obs.size(), direct.cols());
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = 0; j < direct.cols(); ++j) contrast(i, j) = direct(i, j) - smoothed(i, j);
  const auto mu = trend.evaluate(obs.prior);
  std::vector<double> response(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) response[i] = obs.next[i] - mu[i];
  return {std::move(contrast), std::move(response)};
}

/// Checks that the observed noise is consistent with the spec the
/// convolution assumes: exact support for Rademacher, SD within sampling
/// tolerance for Gaussian.
inline void check_noise_matches(std::span<const double> noise, const NoiseSpec& spec) {
  spec.validate();
  const double s = spec.scale();
  if (!spec.is_gaussian()) {
    for (std::size_t i = 0; i < noise.size(); ++i) {
      if (std::abs(std::abs(noise[i]) - s) > 1e-12 * s) {
        throw ConfigError("noise spec mismatch: row " + std::to_string(i) + " has noise " +
                          std::to_string(noise[i]) + ", expected +-" + std::to_string(s));
      }
    }
    return;
  }
  const double n = static_cast<double>(noise.size());
  double ss = 0.0;
  for (double v : noise) ss += v * v;
  const double sd = std::sqrt(ss / n);
  const double tolerance = 0.02 + 6.0 / std::sqrt(2.0 * n);
  if (std::abs(sd / s - 1.0) > tolerance) {
    throw ConfigError("noise spec mismatch: observed noise SD " + std::to_string(sd) +
                      " is inconsistent with sigma_nu = " + std::to_string(s));
  }
}

/// Sets the intercept so that f_hat averages to zero over `prior`, and
/// recomputes the reporting-grid evaluation and pointwise SEs.
inline FeedbackFit normalize_intercept(FeedbackFit fit, std::span<const double> prior) {
  const auto b = eval_basis(fit.basis, prior).matrix;
  const std::size_t p = fit.basis.dimension();
  fit.basis_mean.assign(p, 0.0);
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < p; ++j) fit.basis_mean[j] += b(i, j);
  for (double& v : fit.basis_mean) v /= static_cast<double>(b.rows());

  // Mean of the fitted values, accumulated the same way evaluate() does.
  const auto fitted = b.multiply(fit.coefficients);
  fit.intercept_offset = stats::mean(fitted);

  const auto x = fit.grid_points();
  fit.evaluation.values = fit.evaluate(x);
  fit.pointwise_se = fit.pointwise_se_for(fit.coefficient_covariance);
  return fit;
}

inline FeedbackFit fit_feedback(const ObservationSet& obs, const TrendFit& trend, const BasisSpec& f_basis,
                                const NoiseSpec& noise_spec, const FeedbackFitOptions& options = {},
                                std::span<const double> normalization_prior = {}) {
  f_basis.validate_feedback_role();
  options.grid.validate();
  obs.validate(f_basis.dimension() + 2);
  check_noise_matches(obs.noise, noise_spec);

  std::shared_ptr<const ConvolvedBasis> convolved = options.convolved;
  if (convolved) {
    if (!(convolved->spec() == f_basis) || convolved->noise().scale() != noise_spec.scale() ||
        convolved->noise().is_gaussian() != noise_spec.is_gaussian()) {
      throw ConfigError("fit_feedback: precomputed convolution does not match f_basis / noise spec");
    }
  } else {
    const auto [lo, hi] = value_range(obs.prior);
    convolved = std::make_shared<ConvolvedBasis>(f_basis, noise_spec, lo, hi, options.convolution);
  }

  const auto design = build_feedback_design(obs, trend, *convolved);
  LeastSquaresSolution ls;
  try {
    ls = solve_least_squares(design.contrast, design.response);
  } catch (const RankDeficiencyError& e) {
    throw DegenerateContrastError(
        "fit_feedback: noise contrast is rank deficient (column " + std::to_string(e.column()) +
            ") with sigma_nu = " + std::to_string(noise_spec.scale()) + " and basis dimension " +
            std::to_string(f_basis.dimension()),
        noise_spec.scale(), f_basis.dimension());
  }

  FeedbackFit fit;
  fit.basis = f_basis;
  fit.coefficients = std::move(ls.coefficients);
  fit.sandwich_covariance = std::move(ls.coefficient_covariance_sandwich);
  fit.classical_covariance = std::move(ls.coefficient_covariance_classical);
  fit.covariance_kind = options.covariance == CovarianceKind::classical ? CovarianceKind::classical
                                                                        : CovarianceKind::sandwich;
  fit.coefficient_covariance =
      fit.covariance_kind == CovarianceKind::classical ? fit.classical_covariance : fit.sandwich_covariance;
  fit.residuals = std::move(ls.residuals);
  fit.noise_scale = noise_spec.scale();
  fit.evaluation = GridFunction(options.grid.low, options.grid.step(), std::vector<double>(options.grid.count));
  return normalize_intercept(std::move(fit), normalization_prior.empty() ? std::span<const double>(obs.prior)
                                                                         : normalization_prior);
}

/// (X_f'X_f)^{-1} X_f' (V_Y + X_mu V_mu X_mu') X_f (X_f'X_f)^{-1}, with V_Y diagonal.
inline DenseMatrix variance_full(const DenseMatrix& contrast, std::span<const double> v_y,
                                 const DenseMatrix& trend_design, const DenseMatrix& v_mu) {
  const std::size_t n = contrast.rows();
  if (v_y.size() != n || trend_design.rows() != n || v_mu.rows() != trend_design.cols() ||
      v_mu.cols() != trend_design.cols()) {
    throw ValidationError("variance_full: dimension mismatch between X_f, V_Y, X_mu and V_mu");
  }
  const DenseMatrix bread = QrFactorization(contrast).gram_inverse();
  DenseMatrix meat = weighted_gram(contrast, v_y);
  // X_f' X_mu is p_f x p_mu; the trend term is (X_f'X_mu) V_mu (X_f'X_mu)'.
  DenseMatrix cross(contrast.cols(), trend_design.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = contrast.row(i);
    const auto b = trend_design.row(i);
    for (std::size_t j = 0; j < a.size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) cross(j, k) += a[j] * b[k];
  }
  meat = meat + cross * v_mu * cross.transpose();
  return symmetrize(bread * meat * bread);
}

/// Homoscedastic approximation E[Var(next | prior)] (n Cov(s))^{-1}, s the
/// contrast rows; returns its diagonal. For a one-column basis this is
/// E[Var] / (n Var(s)).
inline std::vector<double> variance_simple(const ObservationSet& obs, const TrendFit& trend,
                                           const ConvolvedBasis& convolved) {
  const auto design = build_feedback_design(obs, trend, convolved);
  const std::size_t n = design.contrast.rows();
  const std::size_t p = design.contrast.cols();
  double conditional_var = 0.0;
  for (double r : design.response) conditional_var += r * r;
  conditional_var /= static_cast<double>(n);

  DenseMatrix centered = design.contrast;
  for (std::size_t j = 0; j < p; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += centered(i, j);
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) centered(i, j) -= m;
  }
  const DenseMatrix inv = QrFactorization(centered).gram_inverse();
  std::vector<double> out(p);
  for (std::size_t j = 0; j < p; ++j) out[j] = conditional_var * inv(j, j);
  return out;
}

/// Trend fit followed by feedback fit, optionally on disjoint halves.
struct TwoStageFit {
  TrendFit trend;
  FeedbackFit feedback;
  /// variance_full with V_Y = squared trend residuals on the feedback rows.
  DenseMatrix full_covariance;
  std::size_t trend_rows = 0;
  std::size_t feedback_rows = 0;
};

inline TwoStageFit fit_two_stage(const ObservationSet& obs, const BasisSpec& mu_basis, const BasisSpec& f_basis,
                                 const NoiseSpec& noise_spec, const FeedbackFitOptions& options = {}) {
  obs.validate();
  const ObservationSet* trend_obs = &obs;
  const ObservationSet* feedback_obs = &obs;
  ObservationSet even;
  ObservationSet odd;
  if (options.split_sample) {
    std::vector<std::size_t> e;
    std::vector<std::size_t> o;
    for (std::size_t i = 0; i < obs.size(); ++i) (i % 2 == 0 ? e : o).push_back(i);
    even = obs.subset(e);
    odd = obs.subset(o);
    trend_obs = &even;
    feedback_obs = &odd;
  }

  TwoStageFit out;
  out.trend = fit_mean_trend(*trend_obs, mu_basis);
  FeedbackFitOptions fopts = options;
  if (!fopts.convolved) {
    const auto [lo, hi] = value_range(obs.prior);
    fopts.convolved = std::make_shared<ConvolvedBasis>(f_basis, noise_spec, lo, hi, options.convolution);
  }
  out.feedback = fit_feedback(*feedback_obs, out.trend, f_basis, noise_spec, fopts, obs.prior);
  out.trend_rows = trend_obs->size();
  out.feedback_rows = feedback_obs->size();

  const auto design = build_feedback_design(*feedback_obs, out.trend, *fopts.convolved);
  std::vector<double> v_y(design.response.size());
  for (std::size_t i = 0; i < v_y.size(); ++i) v_y[i] = design.response[i] * design.response[i];
  const auto x_mu = eval_basis(mu_basis, feedback_obs->prior).matrix;
  out.full_covariance = variance_full(design.contrast, v_y, x_mu, out.trend.coefficient_covariance);

  if (options.covariance == CovarianceKind::full) {
    out.feedback.covariance_kind = CovarianceKind::full;
    out.feedback.coefficient_covariance = out.full_covariance;
    out.feedback.pointwise_se = out.feedback.pointwise_se_for(out.full_covariance);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct RemovalTradeoff {
  /// beta^2 E[y^2]: loss from leaving linear feedback in place.
  double ignore_loss = 0.0;
  /// Var(beta_hat) E[y^2] + sigma_nu^2: loss from correcting with beta_hat.
  double correct_loss = 0.0;
};

inline RemovalTradeoff removal_tradeoff(double beta_hat_var, double mean_sq_prediction, double sigma_nu,
                                        double beta) {
  if (beta_hat_var < 0.0 || mean_sq_prediction < 0.0 || sigma_nu < 0.0) {
    throw ConfigError("removal_tradeoff: variance, mean square and sigma_nu must be >= 0");
  }
  return {beta * beta * mean_sq_prediction, beta_hat_var * mean_sq_prediction + sigma_nu * sigma_nu};
}

}  // namespace feedback_probe
