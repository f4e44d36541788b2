#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "feedback_probe/bootstrap.hpp"
#include "feedback_probe/error.hpp"
#include "feedback_probe/estimator.hpp"
#include "feedback_probe/io/config.hpp"
#include "feedback_probe/io/observation_log.hpp"
#include "feedback_probe/io/report.hpp"
#include "feedback_probe/parallel.hpp"
#include "feedback_probe/simulator.hpp"

namespace feedback_probe::cli {

using io::Json;

/// Seed index reserved for bootstrap resampling, so it never collides with simulation streams.
inline constexpr std::uint64_t kBootstrapStream = 101;

struct SimulationResult {
  io::ObservationLog log;
  GroundTruth truth;
  std::string description;
};

inline SimulationResult simulate(const io::ExperimentConfig& config) {
  if (!config.scenario) throw ConfigError("config field 'scenario' is required for simulation");
  const auto& sc = *config.scenario;
  SimulationResult out;
  switch (sc.kind) {
    case io::ScenarioKind::additive: {
      auto spec = sc.additive;
      spec.noise = config.noise;
      spec.grid = config.grid;
      spec.seed = config.seed;
      auto data = generate_scenario(spec);
      out.log = io::ObservationLog::from(data.obs, data.period);
      out.truth = std::move(data.truth);
      out.description = "additive feedback, shape " + to_string(spec.true_feedback.kind);
      break;
    }
    case io::ScenarioKind::linear: {
      auto period = simulate_linear_period(sc.linear, sc.linear_rows, config.noise, config.seed);
      const double beta = sc.linear.implied_beta();
      out.truth.grid = config.grid.points();
      out.truth.centering_offset = beta * stats::mean(period.obs.prior);
      for (double x : out.truth.grid) {
        out.truth.f_raw.push_back(beta * x);
        out.truth.f_centered.push_back(beta * x - out.truth.centering_offset);
      }
      out.log = io::ObservationLog::from(period.obs, std::vector<std::size_t>(period.obs.size(), 0));
      out.description = "linear feedback, beta = w . gamma = " + std::to_string(beta);
      break;
    }
    case io::ScenarioKind::rule_based: {
      const auto run = run_multi_period(sc.rule_based, sc.rule_periods, config.noise, config.seed);
      out.truth = reference_feedback(run, sc.reference_basis, config.grid);
      out.log = io::ObservationLog::from(run.obs, run.period);
      out.description = "rule-based feedback over " + std::to_string(sc.rule_periods) +
                        " periods; f_true is the best additive approximation fit against the counterfactual";
      break;
    }
  }
  return out;
}

/// The observation log named by input_path, or a fresh simulation.
inline io::ObservationLog load_observations(const io::ExperimentConfig& config) {
  if (config.input_path) return io::read_observation_log(*config.input_path);
  return simulate(config).log;
}

struct SimulateOutcome {
  std::string log_path;
  std::string truth_path;
  std::size_t rows = 0;
};

inline SimulateOutcome cmd_simulate(const io::ExperimentConfig& config) {
  if (!config.scenario) throw ConfigError("simulate: config field 'scenario' is required");
  const auto sim = simulate(config);
  SimulateOutcome out;
  out.log_path = config.output.in_dir(config.output.log);
  out.truth_path = config.output.in_dir(config.output.truth);
  out.rows = sim.log.size();
  io::write_text(out.log_path, io::format_observation_log(sim.log));
  io::write_json(out.truth_path, io::truth_json(config, sim.truth, to_string(config.scenario->kind), sim.description));
  return out;
}

struct FitOutcome {
  Json report;
  io::CurveData curve;
  std::optional<TwoStageFit> fit;
  std::optional<LinearFeedbackFit> linear;
  std::optional<BootstrapBands> bands;
  /// Mean of f_hat over the observed priors (0 by the intercept convention).
  double prior_mean_f_hat = 0.0;
};

inline BootstrapConfig bootstrap_config(const io::ExperimentConfig& config, std::size_t replicates) {
  BootstrapConfig b;
  b.mu_basis = config.mu_basis;
  b.f_basis = config.f_basis;
  b.noise = config.noise;
  b.options = config.fit_options();
  b.replicates = replicates;
  b.seed = derive_seed(config.seed, kBootstrapStream);
  return b;
}

/// Fits the configured estimator; runs the bootstrap when replicates >= 2.
inline FitOutcome run_fit(const io::ExperimentConfig& config, const io::ObservationLog& log, std::size_t replicates) {
  const auto& obs = log.obs;
  FitOutcome out;
  out.report = io::report_header(config);
  std::size_t periods = 0;
  for (std::size_t i = 0; i < log.size(); ++i)
    if (i == 0 || log.period[i] != log.period[i - 1]) ++periods;
  out.report["data"] = Json{{"rows", log.size()},
                            {"periods", periods},
                            {"noise_mean", stats::mean(obs.noise)},
                            {"noise_sd", std::sqrt(stats::variance(obs.noise))}};
  out.curve.x = config.grid.points();

  if (config.estimator == io::EstimatorKind::nonlinear) {
    auto options = config.fit_options();
    const auto [lo, hi] = value_range(obs.prior);
    options.convolved = std::make_shared<ConvolvedBasis>(config.f_basis, config.noise, lo, hi, options.convolution);
    out.fit = fit_two_stage(obs, config.mu_basis, config.f_basis, config.noise, options);
    const auto& f = out.fit->feedback;
    out.curve.f_hat = f.evaluation.values;
    out.curve.se = f.pointwise_se;
    out.prior_mean_f_hat = stats::mean(f.evaluate(obs.prior));
    out.report["trend"] = io::trend_json(out.fit->trend);
    out.report["feedback"] = io::feedback_json(*out.fit);
    out.report["feedback"]["prior_mean_f_hat"] = out.prior_mean_f_hat;
    if (replicates >= 2) {
      auto bc = bootstrap_config(config, replicates);
      bc.options.convolved = options.convolved;
      out.bands = bootstrap_feedback(obs, bc);
      out.curve.se_bootstrap = out.bands->pointwise_se;
      out.report["bootstrap"] =
          Json{{"replicates", out.bands->replicates}, {"failures", out.bands->failures}, {"seed", bc.seed}};
    }
  } else {
    if (replicates >= 2) throw ConfigError("config field 'bootstrap.replicates' requires estimator 'nonlinear'");
    if (config.estimator == io::EstimatorKind::linear_simple) {
      out.linear = fit_linear_simple(obs);
    } else {
      const auto trend = fit_mean_trend(obs, config.mu_basis);
      out.linear = fit_linear_conditioned(obs, trend);
      out.report["trend"] = io::trend_json(trend);
    }
    // f(y) = beta y, shifted to mean zero over the priors.
    const double center = stats::mean(obs.prior);
    for (double x : out.curve.x) {
      out.curve.f_hat.push_back(out.linear->beta_hat * (x - center));
      out.curve.se.push_back(out.linear->standard_error * std::abs(x - center));
    }
    out.report["linear"] = io::linear_json(*out.linear);
    out.report["linear"]["intercept_convention"] = io::kInterceptNote;
  }
  out.report["grid"] = io::curve_json(out.curve);
  return out;
}

inline FitOutcome cmd_fit(const io::ExperimentConfig& config) {
  const auto log = load_observations(config);
  auto out = run_fit(config, log, config.bootstrap_replicates);
  io::write_json(config.output.in_dir(config.output.report), out.report);
  io::write_text(config.output.in_dir(config.output.plot), io::plot_csv(out.curve));
  return out;
}

inline FitOutcome cmd_bootstrap(const io::ExperimentConfig& config) {
  if (config.estimator != io::EstimatorKind::nonlinear) {
    throw ConfigError("bootstrap: config field 'estimator' must be 'nonlinear'");
  }
  const std::size_t b = config.bootstrap_replicates >= 2 ? config.bootstrap_replicates : 200;
  const auto log = load_observations(config);
  auto out = run_fit(config, log, b);
  io::write_json(config.output.in_dir(config.output.report), out.report);
  io::write_text(config.output.in_dir(config.output.plot), io::plot_csv(out.curve));

  io::CsvTable bands;
  bands.add("x_logodds", out.curve.x);
  bands.add("x_prob", io::logistic(out.curve.x));
  bands.add("f_hat", out.curve.f_hat);
  bands.add("se_bootstrap", *out.curve.se_bootstrap);
  bands.add("se_parametric", out.curve.se);
  for (std::size_t r = 0; r < out.bands->replicates; ++r) {
    const auto row = out.bands->replicate_curves.row(r);
    bands.add("replicate_" + std::to_string(r), std::vector<double>(row.begin(), row.end()));
  }
  io::write_text(config.output.in_dir(config.output.bands), bands.str());
  return out;
}

// ---------------------------------------------------------------------------

struct FigurePanel {
  std::string name;
  ShapeKind shape = ShapeKind::null;
  std::uint64_t seed = 0;
  std::vector<double> x;
  std::vector<double> f_true;
  std::vector<double> f_hat;
  std::vector<double> se;
  double coverage = 0.0;
  double prior_mean_f_hat = 0.0;
  std::string path;
};

struct FigureSettings {
  std::size_t n = 100000;
  double natural_sigma = 0.5;
  std::uint64_t seed = 1;
  NoiseSpec noise = NoiseSpec::gaussian(0.25);
  BasisSpec mu_basis{3, -3.0, 3.0, {0.0}, true};
  BasisSpec f_basis{3, -3.0, 3.0, {0.0}, false};
  ReportingGrid grid;
  ConvolutionGridOptions convolution;
  std::string directory = ".";
  std::size_t threads = replicate_threads();

  static FigureSettings from(const io::ExperimentConfig& c) {
    FigureSettings s;
    s.seed = c.seed;
    s.noise = c.noise;
    s.mu_basis = c.mu_basis;
    s.f_basis = c.f_basis;
    s.grid = c.grid;
    s.convolution = c.convolution;
    s.directory = c.output.directory;
    if (c.scenario && c.scenario->kind == io::ScenarioKind::additive) {
      s.n = c.scenario->additive.n;
      s.natural_sigma = c.scenario->additive.natural_sigma;
    }
    return s;
  }
};

inline const std::vector<ShapeKind>& figure_shapes() {
  static const std::vector<ShapeKind> shapes = {
      ShapeKind::continuous_monotone, ShapeKind::monotone_with_jump, ShapeKind::continuous_nonmonotone,
      ShapeKind::nonmonotone_with_jump, ShapeKind::null, ShapeKind::jump_only};
  return shapes;
}

inline FigurePanel run_figure_panel(const FigureSettings& s, std::size_t index) {
  FigurePanel p;
  p.shape = figure_shapes().at(index);
  p.name = std::string("figure1") + static_cast<char>('a' + index);
  p.seed = derive_seed(s.seed, index);

  ScenarioSpec spec;
  spec.n = s.n;
  spec.natural_sigma = s.natural_sigma;
  spec.noise = s.noise;
  spec.true_feedback = FeedbackShape::of_kind(p.shape);
  spec.seed = p.seed;
  spec.grid = s.grid;
  const auto data = generate_scenario(spec);

  FeedbackFitOptions options;
  options.grid = s.grid;
  options.convolution = s.convolution;
  const auto fit = fit_two_stage(data.obs, s.mu_basis, s.f_basis, s.noise, options);
  p.x = data.truth.grid;
  p.f_true = data.truth.f_centered;
  p.f_hat = fit.feedback.evaluation.values;
  p.se = fit.feedback.pointwise_se;
  p.coverage = io::interior_coverage(p.f_hat, p.f_true, p.se);
  p.prior_mean_f_hat = stats::mean(fit.feedback.evaluate(data.obs.prior));
  return p;
}

/// Runs the six simulation panels and writes figure1{a..f}.csv plus summary.csv.
inline std::vector<FigurePanel> cmd_reproduce_figures(const FigureSettings& s) {
  const std::size_t count = figure_shapes().size();
  std::vector<FigurePanel> panels(count);
  parallel_for(count, [&](std::size_t i) { panels[i] = run_figure_panel(s, i); }, s.threads);

  io::OutputPaths paths;
  paths.directory = s.directory;
  std::ostringstream summary;
  summary << "panel,shape,n,seed,coverage\n";
  for (auto& p : panels) {
    io::CsvTable t;
    t.add("x_prob", io::logistic(p.x));
    t.add("f_true", p.f_true);
    t.add("f_hat", p.f_hat);
    t.add("se", p.se);
    p.path = paths.in_dir(p.name + ".csv");
    io::write_text(p.path, t.str());
    char cov[32];
    const auto res = std::to_chars(cov, cov + sizeof(cov), p.coverage);
    summary << p.name << ',' << to_string(p.shape) << ',' << s.n << ',' << p.seed << ','
            << std::string(cov, res.ptr) << '\n';
  }
  io::write_text(paths.in_dir("summary.csv"), summary.str());
  return panels;
}

// ---------------------------------------------------------------------------

struct TradeoffOutcome {
  LinearFeedbackFit linear;
  double beta = 0.0;
  double mean_sq_prediction = 0.0;
  RemovalTradeoff tradeoff;
  Json report;
};

/// Compares leaving linear feedback in place with correcting it by the estimated slope.
inline TradeoffOutcome cmd_tradeoff(const io::ExperimentConfig& config) {
  const auto log = load_observations(config);
  const auto& obs = log.obs;
  TradeoffOutcome out;
  if (config.estimator == io::EstimatorKind::linear_simple) {
    out.linear = fit_linear_simple(obs);
  } else {
    out.linear = fit_linear_conditioned(obs, fit_mean_trend(obs, config.mu_basis));
  }
  out.beta = config.tradeoff_beta.value_or(out.linear.beta_hat);
  double sq = 0.0;
  for (double y : obs.prior) sq += y * y;
  out.mean_sq_prediction = sq / static_cast<double>(obs.size());
  const double se = out.linear.standard_error;
  out.tradeoff = removal_tradeoff(se * se, out.mean_sq_prediction, config.noise.scale(), out.beta);

  out.report = io::report_header(config);
  out.report["linear"] = io::linear_json(out.linear);
  out.report["tradeoff"] = Json{{"beta", out.beta},
                                {"beta_hat_variance", se * se},
                                {"mean_sq_prediction", out.mean_sq_prediction},
                                {"noise_scale", config.noise.scale()},
                                {"ignore_loss", out.tradeoff.ignore_loss},
                                {"correct_loss", out.tradeoff.correct_loss},
                                {"recommendation", out.tradeoff.correct_loss < out.tradeoff.ignore_loss
                                                       ? "correct"
                                                       : "ignore"}};
  io::write_json(config.output.in_dir(config.output.tradeoff), out.report);
  return out;
}

}  // namespace feedback_probe::cli
