#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "feedback_probe/estimator.hpp"
#include "feedback_probe/simulator.hpp"

using namespace feedback_probe;

namespace {

const BasisSpec kMu{3, -3.0, 3.0, {0.0}, true};
const BasisSpec kF{3, -3.0, 3.0, {0.0}, false};

ObservationSet figure_data(ShapeKind shape, std::size_t n, std::uint64_t seed, double sigma_nu = 0.25) {
  ScenarioSpec spec;
  spec.n = n;
  spec.noise = NoiseSpec::gaussian(sigma_nu);
  spec.true_feedback = FeedbackShape::of_kind(shape);
  spec.seed = seed;
  return generate_scenario(spec).obs;
}

/// V^{-1} u for a small symmetric positive definite V (Gauss-Jordan).
std::vector<double> solve_small(std::vector<double> u, DenseMatrix v) {
  const std::size_t p = u.size();
  for (std::size_t c = 0; c < p; ++c) {
    const double piv = v(c, c);
    for (std::size_t j = 0; j < p; ++j) v(c, j) /= piv;
    u[c] /= piv;
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = v(r, c);
      for (std::size_t j = 0; j < p; ++j) v(r, j) -= f * v(c, j);
      u[r] -= f * u[c];
    }
  }
  return u;
}

double wald_statistic(const std::vector<double>& beta, const DenseMatrix& cov) {
  const auto sol = solve_small(beta, cov);
  double s = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) s += beta[i] * sol[i];
  return s;
}

}  // namespace

TEST(LinearSimple, NoiselessSlope) {
  ObservationSet obs;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  for (int i = 0; i < 500; ++i) {
    obs.prior.push_back(z(rng));
    obs.noise.push_back(0.25 * z(rng));
    obs.next.push_back(0.7 * obs.noise.back());
  }
  const auto fit = fit_linear_simple(obs);
  EXPECT_NEAR(fit.beta_hat, 0.7, 1e-12);
  EXPECT_NEAR(fit.residual_variance, 0.0, 1e-24);
  EXPECT_NEAR(fit.standard_error, 0.0, 1e-10);
  EXPECT_EQ(fit.variant, LinearVariant::simple);
}

TEST(LinearSimple, AgreesWithDirectMoments) {
  ObservationSet obs;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  for (int i = 0; i < 1000; ++i) {
    obs.prior.push_back(z(rng));
    obs.noise.push_back(0.25 * z(rng));
    obs.next.push_back(0.5 * obs.prior.back() + 0.3 * obs.noise.back() + 0.5 * z(rng));
  }
  // Oracle: textbook sample moments in long double.
  long double mn = 0, mx = 0;
  for (int i = 0; i < 1000; ++i) {
    mn += obs.noise[i] / 1000.0L;
    mx += obs.next[i] / 1000.0L;
  }
  long double sxy = 0, sxx = 0;
  for (int i = 0; i < 1000; ++i) {
    sxy += (obs.noise[i] - mn) * (obs.next[i] - mx);
    sxx += (obs.noise[i] - mn) * (obs.noise[i] - mn);
  }
  const double beta = static_cast<double>(sxy / sxx);
  const auto fit = fit_linear_simple(obs);
  EXPECT_NEAR(fit.beta_hat, beta, 1e-12);
  long double rm = 0, rv = 0;
  for (int i = 0; i < 1000; ++i) rm += (obs.next[i] - beta * obs.noise[i]) / 1000.0L;
  for (int i = 0; i < 1000; ++i) {
    const long double r = obs.next[i] - beta * obs.noise[i] - rm;
    rv += r * r / 999.0L;
  }
  EXPECT_NEAR(fit.standard_error, std::sqrt(static_cast<double>(rv / (1000.0L * sxx / 999.0L))), 1e-12);
}

TEST(LinearSimple, NullCaseWithinFourSe) {
  const auto obs = figure_data(ShapeKind::null, 100000, 17);
  const auto fit = fit_linear_simple(obs);
  EXPECT_LE(std::abs(fit.beta_hat), 4.0 * fit.standard_error);
}

TEST(LinearSimple, ZeroNoiseIsDegenerate) {
  ObservationSet obs{{1, 2, 3, 4}, {0, 0, 0, 0}, {1, 2, 3, 4}};
  EXPECT_THROW(fit_linear_simple(obs), DegenerateInstrumentError);
}

TEST(LinearConditioned, ZeroTrendReducesToSimple) {
  const auto obs = figure_data(ShapeKind::continuous_monotone, 5000, 3);
  const auto a = fit_linear_simple(obs);
  const auto b = fit_linear_conditioned(obs, TrendFit::zero());
  EXPECT_EQ(a.beta_hat, b.beta_hat);
  EXPECT_EQ(a.standard_error, b.standard_error);
  EXPECT_EQ(b.variant, LinearVariant::conditioned);
}

TEST(LinearConditioned, ExactTrendPlusLinearFeedback) {
  ObservationSet obs;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  for (int i = 0; i < 2000; ++i) {
    obs.prior.push_back(-2.0 + z(rng));
    obs.noise.push_back(0.25 * z(rng));
  }
  // Make the noise exactly orthogonal to (1, prior) in sample, so the trend fit is exact.
  const BasisSpec mu{1, -3.0, 3.0, {}, true};
  obs.noise = solve_least_squares(eval_basis(mu, obs.prior).matrix, obs.noise).residuals;
  for (int i = 0; i < 2000; ++i) obs.next.push_back(1.0 + 0.5 * obs.prior[i] + 0.3 * obs.noise[i]);
  const auto fit = fit_linear_conditioned(obs, fit_mean_trend(obs, mu));
  EXPECT_NEAR(fit.beta_hat, 0.3, 1e-10);
  EXPECT_NEAR(fit.standard_error, 0.0, 1e-8);
}

TEST(LinearConditioned, TrendAbsorbsFunctionsOfPrior) {
  auto obs = figure_data(ShapeKind::continuous_monotone, 20000, 5);
  const BasisSpec mu{1, -3.0, 3.0, {}, true};
  const auto before = fit_linear_conditioned(obs, fit_mean_trend(obs, mu));
  for (std::size_t i = 0; i < obs.size(); ++i) obs.next[i] += 2.0 - 0.3 * obs.prior[i];
  const auto after = fit_linear_conditioned(obs, fit_mean_trend(obs, mu));
  EXPECT_NEAR(after.beta_hat, before.beta_hat, 1e-10);
}

TEST(MeanTrend, ConstantResponse) {
  const auto base = figure_data(ShapeKind::null, 2000, 6);
  ObservationSet obs = base;
  obs.next.assign(obs.size(), 1.75);
  const auto t = fit_mean_trend(obs, kMu);
  EXPECT_NEAR(t.coefficients[0], 1.75, 1e-10);
  for (std::size_t j = 1; j < t.coefficients.size(); ++j) EXPECT_NEAR(t.coefficients[j], 0.0, 1e-10);
}

TEST(MeanTrend, ReproducesIdentity) {
  ObservationSet obs = figure_data(ShapeKind::null, 2000, 7);
  obs.next = obs.prior;
  const auto t = fit_mean_trend(obs, kMu);
  const ReportingGrid grid;
  const auto x = grid.points();
  const auto mu = t.evaluate(x);
  for (std::size_t k = 1; k + 1 < x.size(); ++k) EXPECT_NEAR(mu[k], x[k], 1e-8);
}

TEST(MeanTrend, RequiresIntercept) {
  const auto obs = figure_data(ShapeKind::null, 500, 10);
  EXPECT_THROW(fit_mean_trend(obs, kF), ConfigError);
}

TEST(FitFeedback, NullScenarioIsJointlyInsignificant) {
  const auto obs = figure_data(ShapeKind::null, 100000, 11);
  const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25));
  // chi-square(4) upper 0.001 quantile
  EXPECT_LT(wald_statistic(fit.feedback.coefficients, fit.feedback.coefficient_covariance), 18.47);
  EXPECT_GE(*std::min_element(fit.feedback.pointwise_se.begin(), fit.feedback.pointwise_se.end()), 0.0);
}

TEST(FitFeedback, JumpOnlyRecoversJump) {
  const auto obs = figure_data(ShapeKind::jump_only, 100000, 12);
  const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25));
  const auto& f = fit.feedback;
  const double se = std::sqrt(f.coefficient_covariance(3, 3));
  EXPECT_NEAR(f.coefficients[3], 0.3, 3.0 * se);
  DenseMatrix v(3, 3);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) v(a, b) = f.coefficient_covariance(a, b);
  // chi-square(3) upper 0.001 quantile
  EXPECT_LT(wald_statistic({f.coefficients[0], f.coefficients[1], f.coefficients[2]}, v), 16.27);
}

TEST(FitFeedback, LinearFeedbackMatchesConditionedEstimator) {
  ScenarioSpec spec;
  spec.n = 50000;
  spec.seed = 13;
  spec.true_feedback.kind = ShapeKind::custom;
  spec.true_feedback.custom = GridFunction(-20.0, 40.0, {-20.0 * 0.15, 20.0 * 0.15});
  const auto obs = generate_scenario(spec).obs;
  const BasisSpec linear{1, -3.0, 3.0, {}, false};
  const auto fit = fit_two_stage(obs, kMu, linear, spec.noise);
  const auto lin = fit_linear_conditioned(obs, fit.trend);
  const double se_f = std::sqrt(fit.feedback.coefficient_covariance(0, 0));
  EXPECT_NEAR(fit.feedback.coefficients[0], lin.beta_hat, 2.0 * std::hypot(se_f, lin.standard_error));
  EXPECT_NEAR(fit.feedback.coefficients[0], 0.15, 4.0 * se_f);
}

TEST(FitFeedback, DegenerateContrastNamesScaleAndDimension) {
  const auto obs = figure_data(ShapeKind::null, 2000, 14);
  const BasisSpec dup{0, -3.0, 3.0, {0.0, 0.0}, false};
  try {
    fit_two_stage(obs, kMu, dup, NoiseSpec::gaussian(0.25));
    FAIL();
  } catch (const DegenerateContrastError& e) {
    EXPECT_EQ(e.sigma_nu(), 0.25);
    EXPECT_EQ(e.dimension(), 2u);
  }
}

TEST(FitFeedback, NoiseSpecMismatchRejected) {
  const auto obs = figure_data(ShapeKind::null, 5000, 15, 0.25);
  const auto trend = fit_mean_trend(obs, kMu);
  EXPECT_THROW(fit_feedback(obs, trend, kF, NoiseSpec::gaussian(0.5)), ConfigError);
  EXPECT_THROW(fit_feedback(obs, trend, kF, NoiseSpec::rademacher(0.25)), ConfigError);
  EXPECT_THROW(fit_feedback(obs, trend, kMu, NoiseSpec::gaussian(0.25)), ConfigError);
}

TEST(FitFeedback, RademacherNoiseEndToEnd) {
  ScenarioSpec spec;
  spec.n = 50000;
  spec.seed = 16;
  spec.noise = NoiseSpec::rademacher(0.25);
  spec.true_feedback = FeedbackShape::of_kind(ShapeKind::jump_only);
  const auto obs = generate_scenario(spec).obs;
  const auto fit = fit_two_stage(obs, kMu, kF, spec.noise);
  const double se = std::sqrt(fit.feedback.coefficient_covariance(3, 3));
  EXPECT_NEAR(fit.feedback.coefficients[3], 0.3, 4.0 * se);
}

TEST(NormalizeIntercept, MeanOverPriorsIsZero) {
  for (auto shape : {ShapeKind::continuous_monotone, ShapeKind::nonmonotone_with_jump, ShapeKind::null}) {
    const auto obs = figure_data(shape, 20000, 18);
    const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25));
    EXPECT_NEAR(stats::mean(fit.feedback.evaluate(obs.prior)), 0.0, 1e-10);
  }
}

TEST(NormalizeIntercept, IdempotentAndShiftInvariant) {
  const auto obs = figure_data(ShapeKind::monotone_with_jump, 20000, 19);
  const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25)).feedback;
  const auto again = normalize_intercept(fit, obs.prior);
  EXPECT_EQ(again.intercept_offset, fit.intercept_offset);
  EXPECT_EQ(again.evaluation.values, fit.evaluation.values);

  auto shifted = fit;
  shifted.intercept_offset += 5.0;
  for (double& v : shifted.evaluation.values) v += 5.0;
  const auto back = normalize_intercept(shifted, obs.prior);
  EXPECT_EQ(back.evaluation.values, fit.evaluation.values);
  EXPECT_EQ(back.coefficients, fit.coefficients);
}

TEST(NormalizeIntercept, ImbalancedDataPinsLowProbabilityEnd) {
  // 90% of priors sit near log-odds -4, so f_hat averages to ~0 there.
  const auto obs = figure_data(ShapeKind::continuous_monotone, 100000, 20);
  const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25)).feedback;
  const std::vector<double> low{-3.0};
  const std::vector<double> high{3.0};
  EXPECT_LT(std::abs(fit.evaluate(low)[0]), 0.25 * std::abs(fit.evaluate(high)[0]));
}

TEST(VarianceFull, ReducesToSandwichWithoutTrendTerm) {
  const auto obs = figure_data(ShapeKind::continuous_monotone, 5000, 21);
  const auto trend = fit_mean_trend(obs, kMu);
  const auto [lo, hi] = value_range(obs.prior);
  const ConvolvedBasis cb(kF, NoiseSpec::gaussian(0.25), lo, hi);
  const auto design = build_feedback_design(obs, trend, cb);
  const auto ls = solve_least_squares(design.contrast, design.response);
  std::vector<double> v_y(obs.size());
  for (std::size_t i = 0; i < v_y.size(); ++i) v_y[i] = ls.residuals[i] * ls.residuals[i];
  const auto x_mu = eval_basis(kMu, obs.prior).matrix;
  const DenseMatrix zero(kMu.dimension(), kMu.dimension());
  const auto v = variance_full(design.contrast, v_y, x_mu, zero);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b)
      EXPECT_NEAR(v(a, b), ls.coefficient_covariance_sandwich(a, b), 1e-10 * std::abs(ls.coefficient_covariance_sandwich(a, a)));

  const std::vector<double> flat(obs.size(), 0.36);
  const auto c = variance_full(design.contrast, flat, x_mu, zero);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b)
      EXPECT_NEAR(c(a, b), 0.36 * ls.gram_inverse(a, b), 1e-10 * std::abs(ls.gram_inverse(a, a)));

  EXPECT_THROW(variance_full(design.contrast, std::vector<double>(3, 1.0), x_mu, zero), ValidationError);
}

TEST(VarianceFull, TrendTermAddsVariance) {
  const auto obs = figure_data(ShapeKind::null, 5000, 22);
  const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_GE(fit.full_covariance(j, j), 0.0);
}

TEST(VarianceSimple, ScalesAsOneOverN) {
  const auto big = figure_data(ShapeKind::null, 40000, 23);
  std::vector<std::size_t> half_rows(20000);
  for (std::size_t i = 0; i < half_rows.size(); ++i) half_rows[i] = i;
  const auto half = big.subset(half_rows);
  const auto [lo, hi] = value_range(big.prior);
  const ConvolvedBasis cb(kF, NoiseSpec::gaussian(0.25), lo, hi);
  const auto v_big = variance_simple(big, fit_mean_trend(big, kMu), cb);
  const auto v_half = variance_simple(half, fit_mean_trend(half, kMu), cb);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(v_big[j] / v_half[j], 0.5, 0.05);
}

TEST(VarianceSimple, GrowsAsNoiseShrinks) {
  auto make = [](double sigma_nu) {
    ScenarioSpec spec;
    spec.n = 40000;
    spec.seed = 24;
    spec.noise = NoiseSpec::gaussian(sigma_nu);
    return generate_scenario(spec).obs;
  };
  const auto wide = make(0.25);
  const auto narrow = make(0.125);
  const ConvolvedBasis cw(kF, NoiseSpec::gaussian(0.25), value_range(wide.prior).first, value_range(wide.prior).second);
  const ConvolvedBasis cn(kF, NoiseSpec::gaussian(0.125), value_range(narrow.prior).first,
                          value_range(narrow.prior).second);
  const auto vw = variance_simple(wide, fit_mean_trend(wide, kMu), cw);
  const auto vn = variance_simple(narrow, fit_mean_trend(narrow, kMu), cn);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_GT(vn[j], vw[j]);
}

TEST(VarianceSimple, AgreesWithFullVarianceWhenHomoscedastic) {
  const auto obs = figure_data(ShapeKind::null, 50000, 25);
  const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25));
  const auto [lo, hi] = value_range(obs.prior);
  const ConvolvedBasis cb(kF, NoiseSpec::gaussian(0.25), lo, hi);
  const auto vs = variance_simple(obs, fit.trend, cb);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(vs[j] / fit.full_covariance(j, j), 1.0, 0.25) << j;
}

TEST(TwoStage, SplitSampleUsesDisjointHalves) {
  const auto obs = figure_data(ShapeKind::null, 5001, 26);
  FeedbackFitOptions opts;
  opts.split_sample = true;
  const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25), opts);
  EXPECT_EQ(fit.trend_rows, 2501u);
  EXPECT_EQ(fit.feedback_rows, 2500u);
  EXPECT_NEAR(stats::mean(fit.feedback.evaluate(obs.prior)), 0.0, 1e-10);
}

TEST(TwoStage, FullCovarianceOption) {
  const auto obs = figure_data(ShapeKind::null, 5000, 27);
  FeedbackFitOptions opts;
  opts.covariance = CovarianceKind::full;
  const auto fit = fit_two_stage(obs, kMu, kF, NoiseSpec::gaussian(0.25), opts);
  EXPECT_EQ(fit.feedback.covariance_kind, CovarianceKind::full);
  EXPECT_EQ(fit.feedback.pointwise_se, fit.feedback.pointwise_se_for(fit.full_covariance));
}

TEST(RemovalTradeoff, Arithmetic) {
  EXPECT_EQ(removal_tradeoff(0.01, 2.0, 0.1, 0.0).ignore_loss, 0.0);
  EXPECT_EQ(removal_tradeoff(0.0, 2.0, 0.0, 0.3).correct_loss, 0.0);
  const auto t = removal_tradeoff(0.0004, 1.0, 0.1, 0.1);
  EXPECT_NEAR(t.ignore_loss, 0.01, 1e-15);
  EXPECT_NEAR(t.correct_loss, 0.0104, 1e-15);
  EXPECT_THROW(removal_tradeoff(-1.0, 1.0, 0.1, 0.1), ConfigError);
}
