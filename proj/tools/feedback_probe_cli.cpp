#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "feedback_probe/cli/commands.hpp"

namespace fp = feedback_probe;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIntegrity = 3;
constexpr int kExitNumerical = 4;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::size_t> bootstrap_reps;
  bool quick = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* c = cmd->add_option("--config", flags.config_path, "Experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--seed", flags.seed, "Root seed, overrides the config");
  cmd->add_option("--output", flags.output, "Output directory, overrides the config");
  cmd->add_option("--bootstrap-reps", flags.bootstrap_reps, "Bootstrap replicates, overrides the config");
  cmd->add_flag("--quick", flags.quick, "Smaller run (n = 10000 figures, 50 bootstrap replicates)");
}

fp::io::ExperimentConfig load(const CommonFlags& flags) {
  fp::io::ExperimentConfig config;
  if (!flags.config_path.empty()) {
    config = fp::io::load_config(flags.config_path);
  } else {
    config.scenario = fp::io::ScenarioConfig{};
  }
  if (flags.seed) config.seed = *flags.seed;
  if (flags.output) config.output.directory = *flags.output;
  if (flags.bootstrap_reps) config.bootstrap_replicates = *flags.bootstrap_reps;
  config.validate();
  return config;
}

void print_curve_summary(const fp::cli::FitOutcome& out) {
  if (out.fit) {
    for (const auto& j : out.report["feedback"]["jump_tests"]) {
      std::printf("jump at %g: coefficient %.4f (se %.4f, t %.2f)\n", j["location"].get<double>(),
                  j["coefficient"].get<double>(), j["se"].get<double>(), j["t"].get<double>());
    }
  }
  if (out.linear) {
    std::printf("beta_hat %.6f (se %.6f)\n", out.linear->beta_hat, out.linear->standard_error);
  }
  if (out.bands) std::printf("bootstrap: %zu replicates, %zu redrawn\n", out.bands->replicates, out.bands->failures);
}

int run(int argc, char** argv) {
  CLI::App app{"Detects feedback loops in deployed predictive models via injected noise"};
  app.require_subcommand(1);

  CommonFlags simulate_flags, fit_flags, bootstrap_flags, figures_flags, tradeoff_flags;
  auto* simulate = app.add_subcommand("simulate", "Simulate a scenario and write an observation log");
  add_common(simulate, simulate_flags, true);
  auto* fit = app.add_subcommand("fit", "Fit trend and feedback, write a report");
  add_common(fit, fit_flags, true);
  auto* bootstrap = app.add_subcommand("bootstrap", "Fit with bootstrap bands");
  add_common(bootstrap, bootstrap_flags, true);
  auto* figures = app.add_subcommand("reproduce-figures", "Run the six simulation panels");
  add_common(figures, figures_flags, false);
  auto* tradeoff = app.add_subcommand("tradeoff", "Compare ignoring and correcting linear feedback");
  add_common(tradeoff, tradeoff_flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (simulate->parsed()) {
    const auto config = load(simulate_flags);
    const auto out = fp::cli::cmd_simulate(config);
    std::printf("wrote %zu rows to %s and truth to %s\n", out.rows, out.log_path.c_str(), out.truth_path.c_str());
  } else if (fit->parsed()) {
    const auto config = load(fit_flags);
    const auto out = fp::cli::cmd_fit(config);
    print_curve_summary(out);
    std::printf("wrote %s\n", config.output.in_dir(config.output.report).c_str());
  } else if (bootstrap->parsed()) {
    auto config = load(bootstrap_flags);
    if (bootstrap_flags.quick && !bootstrap_flags.bootstrap_reps && config.bootstrap_replicates == 0) {
      config.bootstrap_replicates = 50;
    }
    const auto out = fp::cli::cmd_bootstrap(config);
    print_curve_summary(out);
    std::printf("wrote %s\n", config.output.in_dir(config.output.bands).c_str());
  } else if (figures->parsed()) {
    const auto config = load(figures_flags);
    auto settings = fp::cli::FigureSettings::from(config);
    if (figures_flags.quick) settings.n = 10000;
    const auto panels = fp::cli::cmd_reproduce_figures(settings);
    for (const auto& p : panels) {
      std::printf("%s %-24s coverage %.3f\n", p.name.c_str(), fp::to_string(p.shape).c_str(), p.coverage);
    }
  } else if (tradeoff->parsed()) {
    const auto config = load(tradeoff_flags);
    const auto out = fp::cli::cmd_tradeoff(config);
    std::printf("beta %.6f: ignore loss %.6g, correct loss %.6g -> %s\n", out.beta, out.tradeoff.ignore_loss,
                out.tradeoff.correct_loss,
                out.tradeoff.correct_loss < out.tradeoff.ignore_loss ? "correct" : "ignore");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const fp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fp::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fp::IntegrityError& e) {
    std::cerr << "data integrity error: " << e.what() << '\n';
    return kExitIntegrity;
  } catch (const fp::DomainError& e) {
    std::cerr << "invalid parameter: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
