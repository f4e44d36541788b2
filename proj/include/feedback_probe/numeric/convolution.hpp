#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "feedback_probe/error.hpp"
#include "feedback_probe/numeric/gaussian.hpp"
#include "feedback_probe/numeric/grid_function.hpp"

namespace feedback_probe {

/// Symmetric convolution kernel described by its density, a standard scale
/// (the standard deviation for Gaussians) and the half-width at which it is
/// truncated.
struct ConvolutionKernel {
  std::function<double(double)> density;
  double scale = 1.0;
  double halfwidth = 6.0;

  static ConvolutionKernel gaussian(double sigma, double halfwidth_in_sigmas = 6.0) {
    require_positive_sigma(sigma);
    return {[sigma](double x) { return gaussian_pdf(x, sigma); }, sigma, halfwidth_in_sigmas * sigma};
  }
};

namespace detail {

// FFTW planning is not thread-safe; execution on distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        real_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        spectrum_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(fftw_planner_mutex());
    const int len = static_cast<int>(n);
    forward_ = fftw_plan_dft_r2c_1d(len, real_.get(), spectrum_.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(len, spectrum_.get(), real_.get(), FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  std::vector<std::complex<double>> forward(const std::vector<double>& x) {
    std::fill(real_.get(), real_.get() + n_, 0.0);
    std::copy(x.begin(), x.end(), real_.get());
    fftw_execute(forward_);
    std::vector<std::complex<double>> out(n_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spectrum_.get()[k][0], spectrum_.get()[k][1]};
    return out;
  }

  std::vector<double> backward(const std::vector<std::complex<double>>& s) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      spectrum_.get()[k][0] = s[k].real();
      spectrum_.get()[k][1] = s[k].imag();
    }
    fftw_execute(backward_);
    std::vector<double> out(real_.get(), real_.get() + n_);
    const double inv = 1.0 / static_cast<double>(n_);
    for (double& v : out) v *= inv;
    return out;
  }

 private:
  std::size_t n_;
  std::unique_ptr<double, FftwDeleter> real_;
  std::unique_ptr<fftw_complex, FftwDeleter> spectrum_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

/// Discretized kernel weights at offsets -m..m (m = round(halfwidth/step)),
/// normalized so that sum * step = 1.
inline std::vector<double> discretize_kernel(const ConvolutionKernel& kernel, double step) {
  if (!(step > 0.0)) throw ConfigError("discretize_kernel: step must be > 0");
  const auto within_two_scales = 2 * static_cast<long>(std::floor(2.0 * kernel.scale / step)) + 1;
  if (within_two_scales < 8) {
    throw ConfigError("convolution grid too coarse: kernel has " + std::to_string(within_two_scales) +
                      " samples within +-2 scales (need >= 8); step=" + std::to_string(step) +
                      ", scale=" + std::to_string(kernel.scale));
  }
  const auto m = static_cast<std::size_t>(std::llround(kernel.halfwidth / step));
  std::vector<double> w(2 * m + 1);
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double x = (static_cast<double>(k) - static_cast<double>(m)) * step;
    w[k] = kernel.density(x);
    total += w[k];
  }
  for (double& v : w) v /= total;  // unit mass: sum(w) = 1, i.e. sum(density) * step = 1
  return w;
}

/// (kernel * f) on the interior of f's grid. The result drops
/// round(halfwidth/step) samples from each end, where the kernel would
/// reach past the sampled function.
inline GridFunction fft_convolve_grid(const GridFunction& f, const ConvolutionKernel& kernel) {
  f.validate();
  const auto weights = discretize_kernel(kernel, f.step);
  const std::size_t m = (weights.size() - 1) / 2;
  const std::size_t n = f.values.size();
  if (n < 2 * m + 2) {
    throw ConfigError("fft_convolve_grid: grid of " + std::to_string(n) +
                      " samples is too short for kernel padding of " + std::to_string(m) +
                      " samples per side");
  }
  const std::size_t size = detail::next_pow2(n + weights.size());
  detail::RealFft fft(size);
  auto fs = fft.forward(f.values);
  const auto ks = fft.forward(weights);
  for (std::size_t k = 0; k < fs.size(); ++k) fs[k] *= ks[k];
  const auto full = fft.backward(fs);

  // The centered convolution at node i is entry i + m of the linear
  // convolution; interior node m + k therefore maps to entry k + 2m.
  std::vector<double> interior(n - 2 * m);
  for (std::size_t i = 0; i < interior.size(); ++i) interior[i] = full[i + 2 * m];
  return GridFunction(f.point(m), f.step, std::move(interior));
}

}  // namespace feedback_probe
