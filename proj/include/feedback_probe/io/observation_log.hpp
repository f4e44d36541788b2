#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "feedback_probe/error.hpp"
#include "feedback_probe/estimator.hpp"

namespace feedback_probe::io {

inline constexpr int kObservationLogVersion = 1;
inline constexpr std::string_view kObservationLogColumns = "id,period,prior,noise,deployed,next";

/// Rows of (id, period, prior, noise, deployed, next).
struct ObservationLog {
  int format_version = kObservationLogVersion;
  std::vector<std::size_t> id;
  std::vector<std::size_t> period;
  ObservationSet obs;
  std::vector<double> deployed;

  std::size_t size() const noexcept { return obs.size(); }

  static ObservationLog from(const ObservationSet& obs, const std::vector<std::size_t>& period) {
    ObservationLog log;
    log.obs = obs;
    log.period = period;
    log.id.resize(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) log.id[i] = i;
    log.deployed = obs.deployed();
    return log;
  }

  /// deployed = prior + noise per row; periods start anywhere and step by 0 or 1.
  void validate() const {
    const std::size_t n = obs.size();
    if (id.size() != n || period.size() != n || deployed.size() != n) {
      throw ValidationError("observation log: column lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double expected = obs.prior[i] + obs.noise[i];
      if (!(std::abs(deployed[i] - expected) <= 1e-12 * std::max(1.0, std::abs(expected)))) {
        throw IntegrityError("observation log: row " + std::to_string(i + 1) + " has deployed " +
                                 std::to_string(deployed[i]) + " != prior + noise " + std::to_string(expected),
                             i + 1);
      }
      if (i > 0 && period[i] != period[i - 1] && period[i] != period[i - 1] + 1) {
        throw IntegrityError("observation log: periods are not contiguous at row " + std::to_string(i + 1), i + 1);
      }
    }
  }
};

namespace detail {

inline void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline void append_number(std::string& out, std::size_t v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

template <typename T>
T parse_field(std::string_view field, std::size_t line, const char* name) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw ValidationError("observation log: line " + std::to_string(line) + ": cannot parse " + name + " '" +
                              std::string(field) + "'",
                          line);
  }
  return value;
}

}  // namespace detail

/// Shortest round-trip decimal representation, so reading back is exact.
inline std::string format_observation_log(const ObservationLog& log) {
  std::string out;
  out.reserve(log.size() * 96 + 128);
  out += "# feedback_probe observation log\n# format_version=";
  out += std::to_string(log.format_version);
  out += '\n';
  out += kObservationLogColumns;
  out += '\n';
  for (std::size_t i = 0; i < log.size(); ++i) {
    detail::append_number(out, log.id[i]);
    out += ',';
    detail::append_number(out, log.period[i]);
    for (double v : {log.obs.prior[i], log.obs.noise[i], log.deployed[i], log.obs.next[i]}) {
      out += ',';
      detail::append_number(out, v);
    }
    out += '\n';
  }
  return out;
}

inline void write_observation_log(const std::string& path, const ObservationLog& log) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << format_observation_log(log);
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

inline ObservationLog parse_observation_log(std::istream& in) {
  ObservationLog log;
  log.format_version = 0;
  std::string line;
  std::size_t line_no = 0;
  bool have_columns = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view key = "# format_version=";
      if (line.rfind(key, 0) == 0) {
        log.format_version = detail::parse_field<int>(std::string_view(line).substr(key.size()), line_no, "version");
      }
      continue;
    }
    if (!have_columns) {
      if (line != kObservationLogColumns) {
        throw ValidationError("observation log: expected header '" + std::string(kObservationLogColumns) +
                              "', got '" + line + "'");
      }
      if (log.format_version != kObservationLogVersion) {
        throw ValidationError("observation log: unsupported format_version " + std::to_string(log.format_version));
      }
      have_columns = true;
      continue;
    }
    std::string_view rest(line);
    std::string_view fields[6];
    for (int k = 0; k < 6; ++k) {
      const auto comma = rest.find(',');
      if ((k < 5) == (comma == std::string_view::npos)) {
        throw ValidationError("observation log: line " + std::to_string(line_no) + " must have 6 fields", line_no);
      }
      fields[k] = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    log.id.push_back(detail::parse_field<std::size_t>(fields[0], line_no, "id"));
    log.period.push_back(detail::parse_field<std::size_t>(fields[1], line_no, "period"));
    log.obs.prior.push_back(detail::parse_field<double>(fields[2], line_no, "prior"));
    log.obs.noise.push_back(detail::parse_field<double>(fields[3], line_no, "noise"));
    log.deployed.push_back(detail::parse_field<double>(fields[4], line_no, "deployed"));
    log.obs.next.push_back(detail::parse_field<double>(fields[5], line_no, "next"));
  }
  if (!have_columns) throw ValidationError("observation log: missing column header");
  log.validate();
  return log;
}

inline ObservationLog read_observation_log(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open observation log '" + path + "'");
  return parse_observation_log(f);
}

}  // namespace feedback_probe::io
