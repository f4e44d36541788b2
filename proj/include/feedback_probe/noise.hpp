#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "feedback_probe/error.hpp"

namespace feedback_probe {

/// SplitMix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `index` under `root` (periods, replicates, ...).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) noexcept {
  return mix_seed(mix_seed(root) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

struct GaussianNoise {
  double sigma_nu = 0.25;
};

/// Uniform on {-epsilon, +epsilon}.
struct RademacherNoise {
  double epsilon = 0.25;
};

struct NoiseSpec {
  std::variant<GaussianNoise, RademacherNoise> kind = GaussianNoise{};
  std::uint64_t seed = 0;

  static NoiseSpec gaussian(double sigma_nu, std::uint64_t seed = 0) {
    NoiseSpec s{GaussianNoise{sigma_nu}, seed};
    s.validate();
    return s;
  }
  static NoiseSpec rademacher(double epsilon, std::uint64_t seed = 0) {
    NoiseSpec s{RademacherNoise{epsilon}, seed};
    s.validate();
    return s;
  }

  bool is_gaussian() const noexcept { return std::holds_alternative<GaussianNoise>(kind); }

  /// sigma_nu for Gaussian noise, epsilon for Rademacher; both equal the SD.
  double scale() const noexcept {
    return std::visit([](const auto& k) {
      if constexpr (std::is_same_v<std::decay_t<decltype(k)>, GaussianNoise>) return k.sigma_nu;
      else return k.epsilon;
    }, kind);
  }

  std::string kind_name() const { return is_gaussian() ? "gaussian" : "rademacher"; }

  NoiseSpec with_seed(std::uint64_t s) const { return NoiseSpec{kind, s}; }

  void validate() const {
    const double s = scale();
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ConfigError("noise: " + kind_name() + " scale must be positive, got " + std::to_string(s));
    }
  }
};

/// n iid draws; the same (spec, n) always returns the same vector.
inline std::vector<double> draw_noise(const NoiseSpec& spec, std::size_t n) {
  spec.validate();
  Rng rng(mix_seed(spec.seed));
  std::vector<double> out(n);
  if (spec.is_gaussian()) {
    std::normal_distribution<double> dist(0.0, spec.scale());
    for (auto& v : out) v = dist(rng);
  } else {
    const double eps = spec.scale();
    std::bernoulli_distribution coin(0.5);
    for (auto& v : out) v = coin(rng) ? eps : -eps;
  }
  return out;
}

/// Raw predictions, the noise added to them and the values actually published.
struct DeployedPredictions {
  std::vector<double> raw;
  std::vector<double> noise;
  std::vector<double> deployed;
};

inline DeployedPredictions deploy(std::span<const double> raw, const NoiseSpec& spec) {
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw ValidationError("deploy: raw prediction " + std::to_string(i) + " is not finite", i);
    }
  }
  DeployedPredictions d;
  d.raw.assign(raw.begin(), raw.end());
  d.noise = draw_noise(spec, raw.size());
  d.deployed.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) d.deployed[i] = d.raw[i] + d.noise[i];
  return d;
}

}  // namespace feedback_probe
