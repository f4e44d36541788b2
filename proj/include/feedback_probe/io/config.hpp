#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "feedback_probe/basis.hpp"
#include "feedback_probe/error.hpp"
#include "feedback_probe/estimator.hpp"
#include "feedback_probe/noise.hpp"
#include "feedback_probe/simulator.hpp"

namespace feedback_probe::io {

using Json = nlohmann::json;

enum class EstimatorKind { nonlinear, linear_simple, linear_conditioned };
enum class ScenarioKind { additive, linear, rule_based };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::nonlinear: return "nonlinear";
    case EstimatorKind::linear_simple: return "linear_simple";
    case EstimatorKind::linear_conditioned: return "linear_conditioned";
  }
  return "unknown";
}

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::additive: return "additive";
    case ScenarioKind::linear: return "linear";
    case ScenarioKind::rule_based: return "rule_based";
  }
  return "unknown";
}

inline std::string to_string(CovarianceKind k) {
  switch (k) {
    case CovarianceKind::sandwich: return "sandwich";
    case CovarianceKind::classical: return "classical";
    case CovarianceKind::full: return "full";
  }
  return "unknown";
}

/// Simulation settings. Noise and seed come from the enclosing config.
struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::additive;
  ScenarioSpec additive;
  LinearEnvironment linear{{1.0, 0.8}, {0.0, 0.1}, {1.0, 0.0}, {0.0, 1.0}, 0.8};
  std::size_t linear_rows = 10000;
  RuleBasedEnvironment rule_based;
  std::size_t rule_periods = 5;
  BasisSpec reference_basis = default_reference_basis();
};

struct OutputPaths {
  std::string directory = ".";
  std::string log = "observations.csv";
  std::string truth = "truth.json";
  std::string report = "report.json";
  std::string plot = "feedback.csv";
  std::string bands = "bootstrap_bands.csv";
  std::string tradeoff = "tradeoff.json";

  std::string in_dir(const std::string& file) const {
    if (directory.empty() || directory == ".") return file;
    return directory + "/" + file;
  }
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::optional<ScenarioConfig> scenario;
  std::optional<std::string> input_path;
  NoiseSpec noise = NoiseSpec::gaussian(0.25);
  BasisSpec mu_basis{3, -3.0, 3.0, {0.0}, true};
  BasisSpec f_basis{3, -3.0, 3.0, {0.0}, false};
  EstimatorKind estimator = EstimatorKind::nonlinear;
  CovarianceKind covariance = CovarianceKind::sandwich;
  bool split_sample = false;
  ReportingGrid grid;
  ConvolutionGridOptions convolution;
  /// 0 means no bootstrap during `fit`; `bootstrap` then uses 200.
  std::size_t bootstrap_replicates = 0;
  OutputPaths output;
  /// Hypothetical feedback slope for `tradeoff`; the fitted one when unset.
  std::optional<double> tradeoff_beta;

  void validate() const {
    if (scenario.has_value() == input_path.has_value()) {
      throw ConfigError("config: exactly one of 'scenario' and 'input_path' must be present");
    }
    noise.validate();
    try {
      mu_basis.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config field 'mu_basis': ") + e.what());
    }
    if (!mu_basis.include_intercept) throw ConfigError("config field 'mu_basis.include_intercept' must be true");
    try {
      f_basis.validate();
      f_basis.validate_feedback_role();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config field 'f_basis': ") + e.what());
    }
    grid.validate();
    if (!(convolution.step_per_sigma > 0.0 && convolution.step_per_sigma <= 0.25))
      throw ConfigError("config field 'convolution.step_per_sigma' must lie in (0, 0.25]");
    if (!(convolution.padding_sigmas >= 3.0))
      throw ConfigError("config field 'convolution.padding_sigmas' must be >= 3");
    if (bootstrap_replicates == 1) throw ConfigError("config field 'bootstrap.replicates' must be 0 or >= 2");
    if (scenario) {
      switch (scenario->kind) {
        case ScenarioKind::additive: scenario->additive.validate(); break;
        case ScenarioKind::linear:
          scenario->linear.validate();
          if (scenario->linear_rows < 100) throw ConfigError("config field 'scenario.rows' must be >= 100");
          break;
        case ScenarioKind::rule_based:
          scenario->rule_based.validate();
          if (scenario->rule_periods < 1) throw ConfigError("config field 'scenario.periods' must be >= 1");
          scenario->reference_basis.validate();
          break;
      }
    }
  }

  FeedbackFitOptions fit_options() const {
    FeedbackFitOptions o;
    o.grid = grid;
    o.convolution = convolution;
    o.covariance = covariance;
    o.split_sample = split_sample;
    return o;
  }
};

namespace detail {

/// Reads one JSON object, rejecting unknown keys and naming fields in errors.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config field '" + label() + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json& at(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  Fields sub(const std::string& key) { return Fields(at(key), name(key)); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(at(key), name(key));
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError("config field '" + name(key) + "' is required");
    return as<T>(at(key), name(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown config field '" + name(it.key()) + "'");
    }
  }

  template <typename T>
  static T as(const Json& v, const std::string& field) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned()))
          throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config field '" + field + "' has the wrong type or value: " + v.dump());
    }
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline std::vector<double> number_list(const Json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError("config field '" + field + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(Fields::as<double>(e, field));
  return out;
}

inline BasisSpec parse_basis(Fields f, BasisSpec b) {
  b.spline_df = f.get<std::size_t>("spline_df", b.spline_df);
  if (f.has("knot_interval")) {
    const auto iv = number_list(f.at("knot_interval"), f.name("knot_interval"));
    if (iv.size() != 2) throw ConfigError("config field '" + f.name("knot_interval") + "' must have two entries");
    b.knot_low = iv[0];
    b.knot_high = iv[1];
  }
  if (f.has("jump_locations")) b.jump_locations = number_list(f.at("jump_locations"), f.name("jump_locations"));
  b.include_intercept = f.get<bool>("include_intercept", b.include_intercept);
  f.finish();
  return b;
}

inline Json basis_json(const BasisSpec& b) {
  return Json{{"spline_df", b.spline_df},
              {"knot_interval", {b.knot_low, b.knot_high}},
              {"jump_locations", b.jump_locations},
              {"include_intercept", b.include_intercept}};
}

inline NoiseSpec parse_noise(Fields f) {
  const auto kind = f.get<std::string>("kind", "gaussian");
  NoiseSpec n;
  if (kind == "gaussian") {
    n = NoiseSpec::gaussian(f.require<double>("sigma_nu"));
  } else if (kind == "rademacher") {
    n = NoiseSpec::rademacher(f.require<double>("epsilon"));
  } else {
    throw ConfigError("config field '" + f.name("kind") + "' must be 'gaussian' or 'rademacher'");
  }
  f.finish();
  return n;
}

inline Json noise_json(const NoiseSpec& n) {
  if (n.is_gaussian()) return Json{{"kind", "gaussian"}, {"sigma_nu", n.scale()}};
  return Json{{"kind", "rademacher"}, {"epsilon", n.scale()}};
}

inline FeedbackShape parse_shape(Fields f) {
  FeedbackShape s = FeedbackShape::of_kind(shape_kind_from_string(f.require<std::string>("shape")));
  s.amplitude = f.get<double>("amplitude", s.amplitude);
  s.width = f.get<double>("width", s.width);
  s.center = f.get<double>("center", s.center);
  s.jump = f.get<double>("jump", s.jump);
  s.jump_location = f.get<double>("jump_location", s.jump_location);
  if (s.kind == ShapeKind::custom) {
    auto g = f.sub("grid");
    s.custom.start = g.require<double>("start");
    s.custom.step = g.require<double>("step");
    s.custom.values = number_list(g.at("values"), g.name("values"));
    g.finish();
    s.custom.validate();
  } else if (f.has("grid")) {
    throw ConfigError("config field '" + f.name("grid") + "' is only allowed for shape 'custom'");
  }
  if (!(s.width > 0.0)) throw ConfigError("config field '" + f.name("width") + "' must be > 0");
  f.finish();
  return s;
}

inline Json shape_json(const FeedbackShape& s) {
  Json j{{"shape", to_string(s.kind)},
         {"amplitude", s.amplitude},
         {"width", s.width},
         {"center", s.center},
         {"jump", s.jump},
         {"jump_location", s.jump_location}};
  if (s.kind == ShapeKind::custom) {
    j["grid"] = Json{{"start", s.custom.start}, {"step", s.custom.step}, {"values", s.custom.values}};
  }
  return j;
}

inline ScenarioConfig parse_scenario(Fields f) {
  ScenarioConfig sc;
  const auto kind = f.get<std::string>("kind", "additive");
  if (kind == "additive") {
    sc.kind = ScenarioKind::additive;
    auto& a = sc.additive;
    a.n = f.get<std::size_t>("n", a.n);
    a.natural_sigma = f.get<double>("natural_sigma", a.natural_sigma);
    a.periods = f.get<std::size_t>("periods", a.periods);
    a.trend_slope = f.get<double>("trend_slope", a.trend_slope);
    a.trend_intercept = f.get<double>("trend_intercept", a.trend_intercept);
    a.true_feedback = f.has("feedback") ? parse_shape(f.sub("feedback")) : FeedbackShape{};
    if (f.has("imbalance")) {
      auto im = f.sub("imbalance");
      auto& s = a.imbalance;
      s.negative_weight = im.get<double>("negative_weight", s.negative_weight);
      s.negative_mean = im.get<double>("negative_mean", s.negative_mean);
      s.negative_sd = im.get<double>("negative_sd", s.negative_sd);
      s.positive_mean = im.get<double>("positive_mean", s.positive_mean);
      s.positive_sd = im.get<double>("positive_sd", s.positive_sd);
      im.finish();
    }
  } else if (kind == "linear") {
    sc.kind = ScenarioKind::linear;
    auto& e = sc.linear;
    sc.linear_rows = f.get<std::size_t>("rows", sc.linear_rows);
    if (f.has("weights")) e.weights = number_list(f.at("weights"), f.name("weights"));
    if (f.has("gamma")) e.gamma = number_list(f.at("gamma"), f.name("gamma"));
    if (f.has("feature_mean")) e.feature_mean = number_list(f.at("feature_mean"), f.name("feature_mean"));
    if (f.has("feature_sd")) e.feature_sd = number_list(f.at("feature_sd"), f.name("feature_sd"));
    e.rho = f.get<double>("rho", e.rho);
  } else if (kind == "rule_based") {
    sc.kind = ScenarioKind::rule_based;
    auto& e = sc.rule_based;
    e.rows = f.get<std::size_t>("rows", e.rows);
    sc.rule_periods = f.get<std::size_t>("periods", sc.rule_periods);
    if (f.has("classifier_weights"))
      e.classifier_weights = number_list(f.at("classifier_weights"), f.name("classifier_weights"));
    if (f.has("feature_mean")) e.feature_mean = number_list(f.at("feature_mean"), f.name("feature_mean"));
    if (f.has("feature_sd")) e.feature_sd = number_list(f.at("feature_sd"), f.name("feature_sd"));
    e.rho = f.get<double>("rho", e.rho);
    if (f.has("rules")) {
      const auto& rules = f.at("rules");
      if (!rules.is_array()) throw ConfigError("config field '" + f.name("rules") + "' must be an array");
      e.rules.clear();
      for (std::size_t k = 0; k < rules.size(); ++k) {
        Fields r(rules[k], f.name("rules") + "[" + std::to_string(k) + "]");
        FeatureRule rule;
        rule.feature = r.require<std::size_t>("feature");
        rule.feature_threshold = r.get<double>("feature_threshold", rule.feature_threshold);
        rule.deployed_threshold = r.get<double>("deployed_threshold", rule.deployed_threshold);
        rule.increment_mean = r.get<double>("increment_mean", rule.increment_mean);
        r.finish();
        e.rules.push_back(rule);
      }
    }
    if (f.has("reference_basis")) sc.reference_basis = parse_basis(f.sub("reference_basis"), sc.reference_basis);
  } else {
    throw ConfigError("config field '" + f.name("kind") + "' must be 'additive', 'linear' or 'rule_based'");
  }
  f.finish();
  return sc;
}

inline Json scenario_json(const ScenarioConfig& sc) {
  Json j{{"kind", to_string(sc.kind)}};
  switch (sc.kind) {
    case ScenarioKind::additive: {
      const auto& a = sc.additive;
      j["n"] = a.n;
      j["natural_sigma"] = a.natural_sigma;
      j["periods"] = a.periods;
      j["trend_slope"] = a.trend_slope;
      j["trend_intercept"] = a.trend_intercept;
      j["feedback"] = shape_json(a.true_feedback);
      j["imbalance"] = Json{{"negative_weight", a.imbalance.negative_weight},
                            {"negative_mean", a.imbalance.negative_mean},
                            {"negative_sd", a.imbalance.negative_sd},
                            {"positive_mean", a.imbalance.positive_mean},
                            {"positive_sd", a.imbalance.positive_sd}};
      break;
    }
    case ScenarioKind::linear:
      j["rows"] = sc.linear_rows;
      j["weights"] = sc.linear.weights;
      j["gamma"] = sc.linear.gamma;
      j["feature_mean"] = sc.linear.feature_mean;
      j["feature_sd"] = sc.linear.feature_sd;
      j["rho"] = sc.linear.rho;
      break;
    case ScenarioKind::rule_based: {
      const auto& e = sc.rule_based;
      j["rows"] = e.rows;
      j["periods"] = sc.rule_periods;
      j["classifier_weights"] = e.classifier_weights;
      j["feature_mean"] = e.feature_mean;
      j["feature_sd"] = e.feature_sd;
      j["rho"] = e.rho;
      Json rules = Json::array();
      for (const auto& r : e.rules) {
        rules.push_back(Json{{"feature", r.feature},
                             {"feature_threshold", r.feature_threshold},
                             {"deployed_threshold", r.deployed_threshold},
                             {"increment_mean", r.increment_mean}});
      }
      j["rules"] = rules;
      j["reference_basis"] = basis_json(sc.reference_basis);
      break;
    }
  }
  return j;
}

template <typename Enum>
Enum parse_enum(const std::string& value, const std::string& field, std::initializer_list<Enum> options) {
  std::string allowed;
  for (Enum e : options) {
    if (to_string(e) == value) return e;
    allowed += (allowed.empty() ? "'" : ", '") + to_string(e) + "'";
  }
  throw ConfigError("config field '" + field + "' must be one of " + allowed);
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  detail::Fields f(j, "");
  ExperimentConfig c;
  c.seed = f.get<std::uint64_t>("seed", c.seed);
  if (f.has("scenario")) c.scenario = detail::parse_scenario(f.sub("scenario"));
  if (f.has("input_path")) c.input_path = f.require<std::string>("input_path");
  if (f.has("noise")) c.noise = detail::parse_noise(f.sub("noise"));
  if (f.has("mu_basis")) c.mu_basis = detail::parse_basis(f.sub("mu_basis"), c.mu_basis);
  if (f.has("f_basis")) c.f_basis = detail::parse_basis(f.sub("f_basis"), c.f_basis);
  if (f.has("estimator")) {
    c.estimator = detail::parse_enum(f.require<std::string>("estimator"), "estimator",
                                     {EstimatorKind::nonlinear, EstimatorKind::linear_simple,
                                      EstimatorKind::linear_conditioned});
  }
  if (f.has("covariance")) {
    c.covariance = detail::parse_enum(f.require<std::string>("covariance"), "covariance",
                                      {CovarianceKind::sandwich, CovarianceKind::classical, CovarianceKind::full});
  }
  c.split_sample = f.get<bool>("split_sample", c.split_sample);
  if (f.has("reporting_grid")) {
    auto g = f.sub("reporting_grid");
    c.grid.low = g.get<double>("low", c.grid.low);
    c.grid.high = g.get<double>("high", c.grid.high);
    c.grid.count = g.get<std::size_t>("points", c.grid.count);
    g.finish();
  }
  if (f.has("convolution")) {
    auto g = f.sub("convolution");
    c.convolution.step_per_sigma = g.get<double>("step_per_sigma", c.convolution.step_per_sigma);
    c.convolution.padding_sigmas = g.get<double>("padding_sigmas", c.convolution.padding_sigmas);
    g.finish();
  }
  if (f.has("bootstrap")) {
    auto b = f.sub("bootstrap");
    c.bootstrap_replicates = b.get<std::size_t>("replicates", c.bootstrap_replicates);
    b.finish();
  }
  if (f.has("output")) {
    auto o = f.sub("output");
    auto& p = c.output;
    p.directory = o.get<std::string>("directory", p.directory);
    p.log = o.get<std::string>("log", p.log);
    p.truth = o.get<std::string>("truth", p.truth);
    p.report = o.get<std::string>("report", p.report);
    p.plot = o.get<std::string>("plot", p.plot);
    p.bands = o.get<std::string>("bands", p.bands);
    p.tradeoff = o.get<std::string>("tradeoff", p.tradeoff);
    o.finish();
  }
  if (f.has("tradeoff")) {
    auto t = f.sub("tradeoff");
    if (t.has("beta")) c.tradeoff_beta = t.require<double>("beta");
    t.finish();
  }
  f.finish();
  if (c.scenario) {
    c.scenario->additive.noise = c.noise;
    c.scenario->additive.grid = c.grid;
    c.scenario->additive.seed = c.seed;
  }
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

/// Canonical form of the effective config: keys sorted, defaults filled in.
/// Output locations are left out unless asked for, so they do not affect the hash.
inline Json config_json(const ExperimentConfig& c, bool include_output = false) {
  Json j{{"seed", c.seed},
         {"noise", detail::noise_json(c.noise)},
         {"mu_basis", detail::basis_json(c.mu_basis)},
         {"f_basis", detail::basis_json(c.f_basis)},
         {"estimator", to_string(c.estimator)},
         {"covariance", to_string(c.covariance)},
         {"split_sample", c.split_sample},
         {"reporting_grid", {{"low", c.grid.low}, {"high", c.grid.high}, {"points", c.grid.count}}},
         {"convolution",
          {{"step_per_sigma", c.convolution.step_per_sigma}, {"padding_sigmas", c.convolution.padding_sigmas}}},
         {"bootstrap", {{"replicates", c.bootstrap_replicates}}}};
  if (include_output) {
    j["output"] = Json{{"directory", c.output.directory}, {"log", c.output.log},     {"truth", c.output.truth},
                       {"report", c.output.report},       {"plot", c.output.plot},   {"bands", c.output.bands},
                       {"tradeoff", c.output.tradeoff}};
  }
  if (c.scenario) j["scenario"] = detail::scenario_json(*c.scenario);
  if (c.input_path) j["input_path"] = *c.input_path;
  if (c.tradeoff_beta) j["tradeoff"] = Json{{"beta", *c.tradeoff_beta}};
  return j;
}

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(config_json(c).dump()); }

}  // namespace feedback_probe::io
