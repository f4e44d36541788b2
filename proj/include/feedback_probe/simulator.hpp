#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "feedback_probe/basis.hpp"
#include "feedback_probe/error.hpp"
#include "feedback_probe/estimator.hpp"
#include "feedback_probe/noise.hpp"
#include "feedback_probe/numeric/dense_matrix.hpp"
#include "feedback_probe/numeric/grid_function.hpp"
#include "feedback_probe/numeric/least_squares.hpp"

namespace feedback_probe {

enum class ShapeKind {
  continuous_monotone,
  monotone_with_jump,
  continuous_nonmonotone,
  nonmonotone_with_jump,
  null,
  jump_only,
  custom,
};

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::continuous_monotone: return "continuous_monotone";
    case ShapeKind::monotone_with_jump: return "monotone_with_jump";
    case ShapeKind::continuous_nonmonotone: return "continuous_nonmonotone";
    case ShapeKind::nonmonotone_with_jump: return "nonmonotone_with_jump";
    case ShapeKind::null: return "null";
    case ShapeKind::jump_only: return "jump_only";
    case ShapeKind::custom: return "custom";
  }
  return "unknown";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
  for (auto k : {ShapeKind::continuous_monotone, ShapeKind::monotone_with_jump, ShapeKind::continuous_nonmonotone,
                 ShapeKind::nonmonotone_with_jump, ShapeKind::null, ShapeKind::jump_only, ShapeKind::custom}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown feedback shape '" + s + "'");
}

/// Ground-truth feedback function in log-odds space.
///
/// Monotone shapes are amplitude * tanh(y / width); non-monotone shapes are
/// a Gaussian bump amplitude * exp(-(y - center)^2 / (2 width^2)); jump
/// variants add jump * 1{y > jump_location}. Custom shapes interpolate a
/// grid and are held constant beyond it.
struct FeedbackShape {
  ShapeKind kind = ShapeKind::null;
  double amplitude = 0.4;
  double width = 1.2;
  double center = 1.0;
  double jump = 0.3;
  double jump_location = 0.0;
  GridFunction custom;

  double operator()(double y) const {
    double v = 0.0;
    switch (kind) {
      case ShapeKind::continuous_monotone:
      case ShapeKind::monotone_with_jump:
        v = amplitude * std::tanh(y / width);
        break;
      case ShapeKind::continuous_nonmonotone:
      case ShapeKind::nonmonotone_with_jump: {
        const double z = (y - center) / width;
        v = amplitude * std::exp(-0.5 * z * z);
        break;
      }
      case ShapeKind::custom: {
        const double x = std::clamp(y, custom.start, custom.end());
        const double q[1] = {x};
        v = interp_linear(custom, q)[0];
        break;
      }
      case ShapeKind::null:
      case ShapeKind::jump_only:
        break;
    }
    if (has_jump() && y > jump_location) v += jump;
    return v;
  }

  bool has_jump() const noexcept {
    return kind == ShapeKind::monotone_with_jump || kind == ShapeKind::nonmonotone_with_jump ||
           kind == ShapeKind::jump_only;
  }

  /// Default parameters for each Figure-1 class.
  static FeedbackShape of_kind(ShapeKind k) {
    FeedbackShape s;
    s.kind = k;
    switch (k) {
      case ShapeKind::continuous_monotone:
      case ShapeKind::monotone_with_jump:
        s.amplitude = 0.4;
        s.width = 1.2;
        break;
      case ShapeKind::continuous_nonmonotone:
      case ShapeKind::nonmonotone_with_jump:
        s.amplitude = 0.3;
        s.width = 1.2;
        s.center = 1.0;
        break;
      default:
        break;
    }
    return s;
  }
};

/// Prior log-odds ~ negative_weight N(negative_mean, negative_sd^2)
///                 + (1 - negative_weight) N(positive_mean, positive_sd^2).
struct ImbalanceSpec {
  double negative_weight = 0.9;
  double negative_mean = -4.0;
  double negative_sd = 1.0;
  double positive_mean = 0.0;
  double positive_sd = 1.0;
};

struct ScenarioSpec {
  std::size_t n = 100000;
  double natural_sigma = 0.5;
  NoiseSpec noise = NoiseSpec::gaussian(0.25);
  FeedbackShape true_feedback;
  ImbalanceSpec imbalance;
  /// mu_true(y) = trend_intercept + trend_slope * y (mild mean reversion).
  double trend_slope = 0.9;
  double trend_intercept = 0.0;
  std::size_t periods = 1;
  std::uint64_t seed = 1;
  ReportingGrid grid;

  void validate() const {
    if (n < 100) throw ConfigError("scenario.n must be >= 100");
    if (!(natural_sigma >= 0.0)) throw ConfigError("scenario.natural_sigma must be >= 0");
    if (periods < 1) throw ConfigError("scenario.periods must be >= 1");
    if (!(imbalance.negative_weight >= 0.0 && imbalance.negative_weight <= 1.0))
      throw ConfigError("scenario.imbalance.negative_weight must lie in [0, 1]");
    if (!(imbalance.negative_sd > 0.0 && imbalance.positive_sd > 0.0))
      throw ConfigError("scenario.imbalance standard deviations must be > 0");
    noise.validate();
    grid.validate();
  }
};

/// True feedback on the reporting grid, raw and centered over the training priors.
struct GroundTruth {
  std::vector<double> grid;
  std::vector<double> f_raw;
  std::vector<double> f_centered;
  double centering_offset = 0.0;
};

struct SimulatedData {
  ObservationSet obs;
  std::vector<std::size_t> period;
  GroundTruth truth;
};

inline GroundTruth centered_truth(const FeedbackShape& shape, const ReportingGrid& grid,
                                  std::span<const double> prior) {
  GroundTruth t;
  t.grid = grid.points();
  double s = 0.0;
  for (double p : prior) s += shape(p);
  t.centering_offset = s / static_cast<double>(prior.size());
  t.f_raw.resize(t.grid.size());
  t.f_centered.resize(t.grid.size());
  for (std::size_t k = 0; k < t.grid.size(); ++k) {
    t.f_raw[k] = shape(t.grid[k]);
    t.f_centered[k] = t.f_raw[k] - t.centering_offset;
  }
  return t;
}

inline std::vector<double> draw_imbalanced_priors(const ImbalanceSpec& imb, std::size_t n, std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  std::bernoulli_distribution negative(imb.negative_weight);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) {
    const bool neg = negative(rng);
    const double e = z(rng);
    v = neg ? imb.negative_mean + imb.negative_sd * e : imb.positive_mean + imb.positive_sd * e;
  }
  return out;
}

/// next = mu_true(prior) + f_true(prior + noise) + N(0, natural_sigma^2),
/// independently for each period.
inline SimulatedData generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  SimulatedData data;
  const std::size_t total = spec.n * spec.periods;
  data.obs.prior.reserve(total);
  data.obs.noise.reserve(total);
  data.obs.next.reserve(total);
  data.period.reserve(total);
  for (std::size_t p = 0; p < spec.periods; ++p) {
    const std::uint64_t period_seed = derive_seed(spec.seed, p);
    const auto prior = draw_imbalanced_priors(spec.imbalance, spec.n, derive_seed(period_seed, 1));
    const auto deployed = deploy(prior, spec.noise.with_seed(derive_seed(period_seed, 2)));
    Rng rng(mix_seed(derive_seed(period_seed, 3)));
    std::normal_distribution<double> natural(0.0, 1.0);
    for (std::size_t i = 0; i < spec.n; ++i) {
      const double eta = spec.natural_sigma > 0.0 ? spec.natural_sigma * natural(rng) : 0.0;
      const double next = spec.trend_intercept + spec.trend_slope * prior[i] +
                          spec.true_feedback(deployed.deployed[i]) + eta;
      data.obs.prior.push_back(prior[i]);
      data.obs.noise.push_back(deployed.noise[i]);
      data.obs.next.push_back(next);
      data.period.push_back(p);
    }
  }
  data.truth = centered_truth(spec.true_feedback, spec.grid, data.obs.prior);
  return data;
}

// ---------------------------------------------------------------------------
// Linear environment: x(t+1) = x(t+1)[none] + gamma * deployed, y = w . x

/// Features follow a stationary AR(1): x(t+1) = mean + rho (x(t) - mean) + innovation.
/// A feature with sd 0 is constant (use it for the intercept).
struct LinearEnvironment {
  std::vector<double> weights;
  std::vector<double> gamma;
  std::vector<double> feature_mean;
  std::vector<double> feature_sd;
  double rho = 0.8;

  std::size_t dimension() const noexcept { return weights.size(); }
  double implied_beta() const {
    double b = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) b += weights[k] * gamma[k];
    return b;
  }
  void validate() const {
    const std::size_t d = weights.size();
    if (d == 0 || gamma.size() != d || feature_mean.size() != d || feature_sd.size() != d) {
      throw ConfigError("linear environment: weights, gamma, feature_mean and feature_sd must share a dimension");
    }
    if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("linear environment: rho must lie in (-1, 1)");
  }
};

struct LinearPeriod {
  ObservationSet obs;
  DenseMatrix x_next_no_feedback;
  std::vector<double> next_no_feedback;
};

/// Next-period predictions w . (x_next_no_feedback + gamma * deployed).
inline std::vector<double> step_linear_environment(const LinearEnvironment& env, const DenseMatrix& x_next_no_feedback,
                                                   std::span<const double> deployed) {
  env.validate();
  if (x_next_no_feedback.cols() != env.dimension() || x_next_no_feedback.rows() != deployed.size()) {
    throw ValidationError("step_linear_environment: dimension mismatch");
  }
  std::vector<double> out(deployed.size());
  for (std::size_t i = 0; i < deployed.size(); ++i) {
    const auto x = x_next_no_feedback.row(i);
    double y = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) y += env.weights[k] * (x[k] + env.gamma[k] * deployed[i]);
    out[i] = y;
  }
  return out;
}

inline LinearPeriod simulate_linear_period(const LinearEnvironment& env, std::size_t n, const NoiseSpec& noise,
                                           std::uint64_t seed) {
  env.validate();
  const std::size_t d = env.dimension();
  Rng rng(mix_seed(derive_seed(seed, 1)));
  std::normal_distribution<double> z(0.0, 1.0);
  const double innov = std::sqrt(1.0 - env.rho * env.rho);
  DenseMatrix x_now(n, d);
  DenseMatrix x_next(n, d);
  std::vector<double> prior(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double cur = env.feature_mean[k] + env.feature_sd[k] * z(rng);
      const double nxt = env.feature_mean[k] + env.rho * (cur - env.feature_mean[k]) +
                         env.feature_sd[k] * innov * z(rng);
      x_now(i, k) = cur;
      x_next(i, k) = nxt;
      prior[i] += env.weights[k] * cur;
    }
  }
  const auto dep = deploy(prior, noise.with_seed(derive_seed(seed, 2)));
  LinearPeriod out;
  out.obs.prior = prior;
  out.obs.noise = dep.noise;
  out.obs.next = step_linear_environment(env, x_next, dep.deployed);
  out.next_no_feedback = x_next.multiply(env.weights);
  out.x_next_no_feedback = std::move(x_next);
  return out;
}

// ---------------------------------------------------------------------------
// Rule-based (non-additive) multi-period environment

/// If feature > feature_threshold and deployed > deployed_threshold, the
/// feature is raised next period by an Exponential(mean = increment_mean) bump.
struct FeatureRule {
  std::size_t feature = 1;
  double feature_threshold = 0.5;
  double deployed_threshold = 0.0;
  double increment_mean = 0.25;
};

/// Logistic-regression style classifier over features a = z + bump, where z
/// is an exogenous stationary AR(1) process and bump holds the increments
/// triggered by the previous period's deployed prediction. Feature 0 is the
/// constant 1.
struct RuleBasedEnvironment {
  std::size_t rows = 20000;
  std::vector<double> classifier_weights = {-2.5, 0.9, 0.8, 0.7, 0.6};
  std::vector<double> feature_mean = {1.0, 0.0, 0.0, 0.0, 0.0};
  std::vector<double> feature_sd = {0.0, 1.0, 1.0, 1.0, 1.0};
  double rho = 0.7;
  std::vector<FeatureRule> rules = {
      {1, 0.5, 0.0, 0.30}, {2, 0.5, 0.0, 0.30}, {3, 0.5, 0.0, 0.25},
      {4, 0.5, 0.0, 0.25}, {1, 1.5, 0.0, 0.20}, {2, 1.5, 0.0, 0.20},
  };

  std::size_t dimension() const noexcept { return classifier_weights.size(); }

  void validate(bool require_rules = true) const {
    const std::size_t d = dimension();
    if (d == 0 || feature_mean.size() != d || feature_sd.size() != d) {
      throw ConfigError("rule-based environment: weights, feature_mean and feature_sd must share a dimension");
    }
    if (require_rules && rules.empty()) throw ConfigError("rule-based environment: at least one rule required");
    for (const auto& r : rules) {
      if (r.feature >= d) throw ConfigError("rule-based environment: rule feature index out of range");
      if (!(r.increment_mean > 0.0) || !std::isfinite(r.increment_mean))
        throw ConfigError("rule-based environment: increment_mean must be positive and finite");
    }
    if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("rule-based environment: rho must lie in (-1, 1)");
    if (rows < 1) throw ConfigError("rule-based environment: rows must be >= 1");
  }
};

struct MultiPeriodRun {
  /// Pooled (prior, noise, next) pairs, period-major.
  ObservationSet obs;
  std::vector<std::size_t> period;
  /// Observed predictions of the never-deployed world, aligned with obs.next.
  std::vector<double> counterfactual_next;
};

/// Simulates `periods` transitions with noised deployment each period.
/// The counterfactual world shares the latent process and shocks but no
/// rule ever fires in it.
inline MultiPeriodRun run_multi_period(const RuleBasedEnvironment& env, std::size_t periods, const NoiseSpec& noise,
                                       std::uint64_t seed) {
  env.validate(false);
  if (periods < 1) throw ConfigError("run_multi_period: periods must be >= 1");
  const std::size_t d = env.dimension();
  const std::size_t n = env.rows;
  const double innov = std::sqrt(1.0 - env.rho * env.rho);

  DenseMatrix latent(n, d);
  DenseMatrix observed(n, d);
  {
    Rng rng(mix_seed(derive_seed(seed, 0)));
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) latent(i, k) = env.feature_mean[k] + env.feature_sd[k] * z(rng);
    observed = latent;
  }
  auto predict = [&](std::span<const double> x) {
    double y = 0.0;
    for (std::size_t k = 0; k < d; ++k) y += env.classifier_weights[k] * x[k];
    return y;
  };

  MultiPeriodRun run;
  run.obs.prior.reserve(n * periods);
  run.obs.noise.reserve(n * periods);
  run.obs.next.reserve(n * periods);
  run.counterfactual_next.reserve(n * periods);
  run.period.reserve(n * periods);
  for (std::size_t t = 0; t < periods; ++t) {
    const std::uint64_t period_seed = derive_seed(seed, t + 1);
    std::vector<double> prior(n);
    for (std::size_t i = 0; i < n; ++i) prior[i] = predict(observed.row(i));
    const auto dep = deploy(prior, noise.with_seed(derive_seed(period_seed, 1)));

    Rng rng(mix_seed(derive_seed(period_seed, 2)));
    std::normal_distribution<double> z(0.0, 1.0);
    std::exponential_distribution<double> unit_exp(1.0);
    DenseMatrix next_latent(n, d);
    DenseMatrix next_observed(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const double shock = z(rng);
        next_latent(i, k) =
            env.feature_mean[k] + env.rho * (latent(i, k) - env.feature_mean[k]) + env.feature_sd[k] * innov * shock;
        next_observed(i, k) = next_latent(i, k);
      }
      for (const auto& rule : env.rules) {
        const double bump = rule.increment_mean * unit_exp(rng);  // drawn unconditionally: fixed stream layout
        if (observed(i, rule.feature) > rule.feature_threshold && dep.deployed[i] > rule.deployed_threshold) {
          next_observed(i, rule.feature) += bump;
        }
      }
      run.obs.prior.push_back(prior[i]);
      run.obs.noise.push_back(dep.noise[i]);
      run.obs.next.push_back(predict(next_observed.row(i)));
      run.counterfactual_next.push_back(predict(next_latent.row(i)));
      run.period.push_back(t);
    }
    latent = std::move(next_latent);
    observed = std::move(next_observed);
  }
  return run;
}

/// Best additive approximation to the simulated feedback: regresses
/// next - counterfactual_next on reference_basis(deployed) (an intercept is
/// added), and reports the non-intercept part on the grid, centered so that
/// it averages to zero over the priors.
inline GroundTruth reference_feedback(const MultiPeriodRun& run, BasisSpec reference_basis, const ReportingGrid& grid) {
  reference_basis.include_intercept = true;
  const auto deployed = run.obs.deployed();
  std::vector<double> diff(run.obs.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = run.obs.next[i] - run.counterfactual_next[i];
  const auto ls = solve_least_squares(eval_basis(reference_basis, deployed).matrix, diff);

  std::vector<double> beta(ls.coefficients.begin() + 1, ls.coefficients.end());
  BasisSpec shape_basis = reference_basis;
  shape_basis.include_intercept = false;
  const auto at_prior = eval_basis(shape_basis, run.obs.prior).matrix.multiply(beta);

  GroundTruth t;
  t.grid = grid.points();
  t.centering_offset = stats::mean(at_prior);
  t.f_raw = eval_basis(shape_basis, t.grid).matrix.multiply(beta);
  t.f_centered.resize(t.f_raw.size());
  for (std::size_t k = 0; k < t.f_raw.size(); ++k) t.f_centered[k] = t.f_raw[k] - t.centering_offset;
  return t;
}

/// Basis used for the reference curve: df = 5 natural spline on [-9, 3] plus a jump at 0.
inline BasisSpec default_reference_basis() { return BasisSpec{5, -9.0, 3.0, {0.0}, false}; }

}  // namespace feedback_probe
