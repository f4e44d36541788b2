#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "feedback_probe/bootstrap.hpp"
#include "feedback_probe/error.hpp"
#include "feedback_probe/estimator.hpp"
#include "feedback_probe/io/config.hpp"
#include "feedback_probe/simulator.hpp"

namespace feedback_probe::io {

inline constexpr int kReportVersion = 1;

inline constexpr const char* kInterceptNote =
    "f_hat is identified up to a constant; it is shifted so that its mean over the observed priors is zero";

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> logistic(const std::vector<double>& x) {
  std::vector<double> p(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) p[k] = logistic(x[k]);
  return p;
}

inline Json matrix_json(const DenseMatrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

inline void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

/// Column-oriented CSV with shortest round-trip number formatting.
class CsvTable {
 public:
  void add(std::string name, std::vector<double> values) {
    if (!columns_.empty() && values.size() != columns_.front().second.size()) {
      throw ValidationError("csv column '" + name + "' has the wrong length");
    }
    columns_.emplace_back(std::move(name), std::move(values));
  }

  std::string str() const {
    std::string out;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (c) out += ',';
      out += columns_[c].first;
    }
    out += '\n';
    const std::size_t rows = columns_.empty() ? 0 : columns_.front().second.size();
    char buf[64];
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < columns_.size(); ++c) {
        if (c) out += ',';
        const auto res = std::to_chars(buf, buf + sizeof(buf), columns_[c].second[r]);
        out.append(buf, res.ptr);
      }
      out += '\n';
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::vector<double>>> columns_;
};

/// Fraction of interior grid points (endpoints excluded) where |f_hat - truth| <= k * se.
inline double interior_coverage(const std::vector<double>& f_hat, const std::vector<double>& truth,
                                const std::vector<double>& se, double k = 2.0) {
  if (f_hat.size() != truth.size() || se.size() != truth.size() || truth.size() < 3) {
    throw ValidationError("interior_coverage: need three or more aligned grid points");
  }
  std::size_t hit = 0;
  for (std::size_t i = 1; i + 1 < truth.size(); ++i) {
    if (std::abs(f_hat[i] - truth[i]) <= k * se[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size() - 2);
}

inline Json report_header(const ExperimentConfig& config) {
  return Json{{"format_version", kReportVersion},
              {"tool", "feedback_probe"},
              {"seed", config.seed},
              {"config_hash", config_hash(config)},
              {"config", config_json(config)}};
}

inline Json trend_json(const TrendFit& t) {
  return Json{{"basis", detail::basis_json(t.basis)},
              {"coefficients", t.coefficients},
              {"covariance_sandwich", matrix_json(t.coefficient_covariance)},
              {"covariance_classical", matrix_json(t.classical_covariance)}};
}

inline Json feedback_json(const TwoStageFit& fit) {
  const auto& f = fit.feedback;
  Json jumps = Json::array();
  const std::size_t first_jump = (f.basis.include_intercept ? 1 : 0) + f.basis.spline_df;
  for (std::size_t k = 0; k < f.basis.jump_locations.size(); ++k) {
    const std::size_t j = first_jump + k;
    const double se = std::sqrt(f.coefficient_covariance(j, j));
    jumps.push_back(Json{{"location", f.basis.jump_locations[k]},
                         {"coefficient", f.coefficients[j]},
                         {"se", se},
                         {"t", se > 0.0 ? f.coefficients[j] / se : 0.0}});
  }
  return Json{{"basis", detail::basis_json(f.basis)},
              {"coefficients", f.coefficients},
              {"covariance_kind", to_string(f.covariance_kind)},
              {"covariance", matrix_json(f.coefficient_covariance)},
              {"covariance_sandwich", matrix_json(f.sandwich_covariance)},
              {"covariance_classical", matrix_json(f.classical_covariance)},
              {"covariance_full", matrix_json(fit.full_covariance)},
              {"intercept_offset", f.intercept_offset},
              {"intercept_convention", kInterceptNote},
              {"jump_tests", jumps},
              {"trend_rows", fit.trend_rows},
              {"feedback_rows", fit.feedback_rows}};
}

inline Json linear_json(const LinearFeedbackFit& fit) {
  return Json{{"variant", fit.variant == LinearVariant::simple ? "simple" : "conditioned"},
              {"beta_hat", fit.beta_hat},
              {"standard_error", fit.standard_error},
              {"t", fit.standard_error > 0.0 ? fit.beta_hat / fit.standard_error : 0.0},
              {"residual_mean", fit.residual_mean},
              {"residual_variance", fit.residual_variance}};
}

/// Curve data shared by the JSON report and the plot CSV.
struct CurveData {
  std::vector<double> x;
  std::vector<double> f_hat;
  std::vector<double> se;
  std::optional<std::vector<double>> se_bootstrap;
};

inline Json curve_json(const CurveData& c) {
  Json j{{"x_logodds", c.x}, {"x_prob", logistic(c.x)}, {"f_hat", c.f_hat}, {"se", c.se}};
  if (c.se_bootstrap) j["se_bootstrap"] = *c.se_bootstrap;
  return j;
}

/// x in probability space, f_hat and 2-SE bands in log-odds space.
inline std::string plot_csv(const CurveData& c) {
  CsvTable t;
  t.add("x_logodds", c.x);
  t.add("x_prob", logistic(c.x));
  t.add("f_hat", c.f_hat);
  t.add("se", c.se);
  const auto& band_se = c.se_bootstrap ? *c.se_bootstrap : c.se;
  std::vector<double> lo(c.x.size());
  std::vector<double> hi(c.x.size());
  for (std::size_t k = 0; k < c.x.size(); ++k) {
    lo[k] = c.f_hat[k] - 2.0 * band_se[k];
    hi[k] = c.f_hat[k] + 2.0 * band_se[k];
  }
  t.add("lower", lo);
  t.add("upper", hi);
  if (c.se_bootstrap) t.add("se_bootstrap", *c.se_bootstrap);
  return t.str();
}

inline Json truth_json(const ExperimentConfig& config, const GroundTruth& truth, const std::string& kind,
                       const std::string& description) {
  Json j = report_header(config);
  j["scenario_kind"] = kind;
  j["description"] = description;
  j["centering_offset"] = truth.centering_offset;
  j["intercept_convention"] = "f_true is shifted so that its mean over the simulated priors is zero";
  j["grid"] = Json{{"x_logodds", truth.grid},
                   {"x_prob", logistic(truth.grid)},
                   {"f_true", truth.f_centered},
                   {"f_raw", truth.f_raw}};
  return j;
}

}  // namespace feedback_probe::io
