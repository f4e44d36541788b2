#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "feedback_probe/estimator.hpp"
#include "feedback_probe/numeric/gaussian.hpp"
#include "feedback_probe/simulator.hpp"

using namespace feedback_probe;

namespace {

ScenarioSpec small_spec(ShapeKind shape, std::uint64_t seed = 1) {
  ScenarioSpec s;
  s.n = 5000;
  s.seed = seed;
  s.true_feedback = FeedbackShape::of_kind(shape);
  return s;
}

}  // namespace

TEST(Scenario, Deterministic) {
  const auto a = generate_scenario(small_spec(ShapeKind::monotone_with_jump, 3));
  const auto b = generate_scenario(small_spec(ShapeKind::monotone_with_jump, 3));
  EXPECT_EQ(a.obs.prior, b.obs.prior);
  EXPECT_EQ(a.obs.noise, b.obs.noise);
  EXPECT_EQ(a.obs.next, b.obs.next);
  const auto c = generate_scenario(small_spec(ShapeKind::monotone_with_jump, 4));
  EXPECT_NE(a.obs.next, c.obs.next);
}

TEST(Scenario, NoNaturalNoiseAndNullFeedbackIsPureTrend) {
  auto s = small_spec(ShapeKind::null);
  s.natural_sigma = 0.0;
  s.trend_intercept = 0.2;
  const auto d = generate_scenario(s);
  for (std::size_t i = 0; i < d.obs.size(); ++i) EXPECT_EQ(d.obs.next[i], 0.2 + 0.9 * d.obs.prior[i]);
}

TEST(Scenario, ImbalancedPriorMixture) {
  auto s = small_spec(ShapeKind::null);
  s.n = 200000;
  const auto d = generate_scenario(s);
  std::size_t below = 0;
  for (double p : d.obs.prior) below += p < -2.0;
  const double expected = 0.9 * gaussian_cdf(2.0, 1.0) + 0.1 * gaussian_cdf(-2.0, 1.0);
  const double sd = std::sqrt(expected * (1 - expected) / 200000.0);
  EXPECT_NEAR(static_cast<double>(below) / 200000.0, expected, 4 * sd);
}

TEST(Scenario, PeriodsArePooled) {
  auto s = small_spec(ShapeKind::null);
  s.n = 100;
  s.periods = 3;
  const auto d = generate_scenario(s);
  ASSERT_EQ(d.obs.size(), 300u);
  EXPECT_EQ(d.period.front(), 0u);
  EXPECT_EQ(d.period[150], 1u);
  EXPECT_EQ(d.period.back(), 2u);
}

TEST(Scenario, TruthCenteredOverPriors) {
  const auto s = small_spec(ShapeKind::nonmonotone_with_jump);
  const auto d = generate_scenario(s);
  double m = 0.0;
  for (double p : d.obs.prior) m += s.true_feedback(p);
  m /= static_cast<double>(d.obs.size());
  EXPECT_NEAR(d.truth.centering_offset, m, 1e-12);
  for (std::size_t k = 0; k < d.truth.grid.size(); ++k)
    EXPECT_NEAR(d.truth.f_centered[k], s.true_feedback(d.truth.grid[k]) - m, 1e-15);
}

TEST(Scenario, JumpIsStrict) {
  const auto f = FeedbackShape::of_kind(ShapeKind::jump_only);
  EXPECT_EQ(f(0.0), 0.0);
  EXPECT_EQ(f(1e-300), 0.3);
  EXPECT_EQ(FeedbackShape::of_kind(ShapeKind::null)(5.0), 0.0);
}

TEST(Scenario, JumpOnlyConditionalDifference) {
  auto s = small_spec(ShapeKind::jump_only);
  s.n = 100000;
  const auto d = generate_scenario(s);
  // Regress next - 0.9 prior on 1{deployed > 0}.
  DenseMatrix x(d.obs.size(), 2);
  std::vector<double> y(d.obs.size());
  for (std::size_t i = 0; i < d.obs.size(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = d.obs.prior[i] + d.obs.noise[i] > 0.0 ? 1.0 : 0.0;
    y[i] = d.obs.next[i] - 0.9 * d.obs.prior[i];
  }
  const auto ls = solve_least_squares(x, y);
  EXPECT_NEAR(ls.coefficients[1], 0.3, 4.0 * std::sqrt(ls.coefficient_covariance_sandwich(1, 1)));
}

TEST(Scenario, Validation) {
  auto s = small_spec(ShapeKind::null);
  s.n = 10;
  EXPECT_THROW(generate_scenario(s), ConfigError);
  s = small_spec(ShapeKind::null);
  s.imbalance.negative_weight = 1.5;
  EXPECT_THROW(generate_scenario(s), ConfigError);
  EXPECT_THROW(NoiseSpec::gaussian(0.0), ConfigError);
}

TEST(LinearWorld, NoGammaMeansNoFeedback) {
  LinearEnvironment env{{1.0, 0.8}, {0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, 0.8};
  const auto p = simulate_linear_period(env, 2000, NoiseSpec::gaussian(0.1), 5);
  for (std::size_t i = 0; i < p.obs.size(); ++i) EXPECT_NEAR(p.obs.next[i], p.next_no_feedback[i], 1e-12);
}

TEST(LinearWorld, FeedbackIsBetaTimesDeployed) {
  LinearEnvironment env{{1.0, 0.5}, {0.2, 0.2}, {1.0, 0.0}, {0.0, 1.0}, 0.8};
  EXPECT_DOUBLE_EQ(env.implied_beta(), 0.3);
  const auto p = simulate_linear_period(env, 2000, NoiseSpec::gaussian(0.1), 6);
  const auto dep = p.obs.deployed();
  for (std::size_t i = 0; i < p.obs.size(); ++i)
    EXPECT_NEAR(p.obs.next[i] - p.next_no_feedback[i], 0.3 * dep[i], 1e-12);
}

TEST(LinearWorld, SimpleEstimatorRecoversBeta) {
  LinearEnvironment env{{1.0, 0.5}, {0.2, 0.2}, {1.0, 0.0}, {0.0, 1.0}, 0.8};
  const auto p = simulate_linear_period(env, 20000, NoiseSpec::gaussian(0.1), 7);
  const auto fit = fit_linear_simple(p.obs);
  EXPECT_NEAR(fit.beta_hat, 0.3, 4.0 * fit.standard_error);
}

TEST(LinearWorld, DimensionMismatchRejected) {
  LinearEnvironment env{{1.0, 0.5}, {0.2}, {1.0, 0.0}, {0.0, 1.0}, 0.8};
  EXPECT_THROW(simulate_linear_period(env, 10, NoiseSpec::gaussian(0.1), 1), ConfigError);
}

TEST(RuleWorld, NoRulesMeansCounterfactualMatches) {
  RuleBasedEnvironment env;
  env.rows = 2000;
  env.rules.clear();
  const auto run = run_multi_period(env, 3, NoiseSpec::gaussian(0.1), 8);
  ASSERT_EQ(run.obs.size(), 6000u);
  EXPECT_EQ(run.obs.next, run.counterfactual_next);
}

TEST(RuleWorld, UnreachableThresholdNeverFires) {
  RuleBasedEnvironment env;
  env.rows = 2000;
  for (auto& r : env.rules) r.deployed_threshold = 1e9;
  const auto run = run_multi_period(env, 2, NoiseSpec::gaussian(0.1), 9);
  EXPECT_EQ(run.obs.next, run.counterfactual_next);
}

TEST(RuleWorld, BumpsOnlyRaisePositiveWeightFeatures) {
  RuleBasedEnvironment env;
  env.rows = 5000;
  const auto run = run_multi_period(env, 3, NoiseSpec::gaussian(0.1), 10);
  std::size_t raised = 0;
  for (std::size_t i = 0; i < run.obs.size(); ++i) {
    EXPECT_GE(run.obs.next[i], run.counterfactual_next[i]);
    raised += run.obs.next[i] > run.counterfactual_next[i];
  }
  EXPECT_GT(raised, 0u);
  // The first period starts from the latent state, so the chain evolves.
  EXPECT_NE(run.obs.prior[0], run.obs.prior[5000]);
}

TEST(RuleWorld, ReferenceCurveIsCenteredAndIncreasing) {
  RuleBasedEnvironment env;
  env.rows = 20000;
  const auto run = run_multi_period(env, 5, NoiseSpec::gaussian(0.1), 11);
  const ReportingGrid grid;
  const auto t = reference_feedback(run, default_reference_basis(), grid);
  const auto basis = default_reference_basis();
  ASSERT_EQ(t.f_centered.size(), grid.count);
  // Rules need deployed > 0, so feedback above zero exceeds feedback well below it.
  EXPECT_GT(t.f_raw.back(), t.f_raw.front());
  EXPECT_EQ(basis.dimension(), 6u);
}

TEST(RuleWorld, Deterministic) {
  RuleBasedEnvironment env;
  env.rows = 1000;
  const auto a = run_multi_period(env, 2, NoiseSpec::gaussian(0.1), 12);
  const auto b = run_multi_period(env, 2, NoiseSpec::gaussian(0.1), 12);
  EXPECT_EQ(a.obs.next, b.obs.next);
  EXPECT_EQ(a.counterfactual_next, b.counterfactual_next);
}
