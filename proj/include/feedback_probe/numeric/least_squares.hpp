#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "feedback_probe/error.hpp"
#include "feedback_probe/numeric/dense_matrix.hpp"

namespace feedback_probe {

/// Column is rejected when its norm after orthogonalization against the
/// preceding columns falls below this fraction of its original norm.
inline constexpr double kRankTolerance = 1e-10;

/// Householder QR of a tall design matrix, without pivoting so that a
/// rank failure can be attributed to a specific column.
class QrFactorization {
 public:
  explicit QrFactorization(const DenseMatrix& design) : rows_(design.rows()), cols_(design.cols()) {
    if (rows_ < cols_) {
      throw RankDeficiencyError("least squares: " + std::to_string(rows_) + " rows for " +
                                    std::to_string(cols_) + " columns",
                                rows_);
    }
    // Column-major working copy: Householder sweeps touch whole columns.
    columns_.assign(cols_, std::vector<double>(rows_));
    std::vector<double> original_norm(cols_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      const auto r = design.row(i);
      for (std::size_t j = 0; j < cols_; ++j) columns_[j][i] = r[j];
    }
    for (std::size_t j = 0; j < cols_; ++j) original_norm[j] = norm_from(columns_[j], 0);

    r_ = DenseMatrix(cols_, cols_);
    reflectors_.resize(cols_);
    for (std::size_t k = 0; k < cols_; ++k) {
      auto& x = columns_[k];
      const double residual_norm = norm_from(x, k);
      if (original_norm[k] == 0.0 || residual_norm < kRankTolerance * original_norm[k]) {
        throw RankDeficiencyError("least squares: design column " + std::to_string(k) +
                                      " is linearly dependent on the preceding columns",
                                  k);
      }
      const double alpha = x[k] > 0.0 ? -residual_norm : residual_norm;
      std::vector<double> v(rows_ - k);
      v[0] = x[k] - alpha;
      for (std::size_t i = k + 1; i < rows_; ++i) v[i - k] = x[i];
      double vnorm2 = 0.0;
      for (double e : v) vnorm2 += e * e;
      reflectors_[k] = {std::move(v), vnorm2};

      r_(k, k) = alpha;
      for (std::size_t j = k + 1; j < cols_; ++j) {
        apply_reflector(k, columns_[j]);
        r_(k, j) = columns_[j][k];
      }
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  const DenseMatrix& r() const noexcept { return r_; }

  /// Least-squares coefficients for the given response.
  std::vector<double> solve(std::span<const double> response) const {
    if (response.size() != rows_) throw ValidationError("least squares: response length mismatch");
    std::vector<double> qty(response.begin(), response.end());
    for (std::size_t k = 0; k < cols_; ++k) apply_reflector(k, qty);
    std::vector<double> beta(cols_);
    for (std::size_t kk = cols_; kk-- > 0;) {
      double s = qty[kk];
      for (std::size_t j = kk + 1; j < cols_; ++j) s -= r_(kk, j) * beta[j];
      beta[kk] = s / r_(kk, kk);
    }
    return beta;
  }

  /// (X'X)^{-1} = R^{-1} R^{-T}.
  DenseMatrix gram_inverse() const {
    DenseMatrix rinv(cols_, cols_);
    for (std::size_t j = 0; j < cols_; ++j) {
      rinv(j, j) = 1.0 / r_(j, j);
      for (std::size_t i = j; i-- > 0;) {
        double s = 0.0;
        for (std::size_t k = i + 1; k <= j; ++k) s += r_(i, k) * rinv(k, j);
        rinv(i, j) = -s / r_(i, i);
      }
    }
    DenseMatrix out(cols_, cols_);
    for (std::size_t i = 0; i < cols_; ++i)
      for (std::size_t j = i; j < cols_; ++j) {
        double s = 0.0;
        for (std::size_t k = j; k < cols_; ++k) s += rinv(i, k) * rinv(j, k);
        out(i, j) = s;
        out(j, i) = s;
      }
    return out;
  }

 private:
  struct Reflector {
    std::vector<double> v;
    double norm2 = 0.0;
  };

  static double norm_from(const std::vector<double>& x, std::size_t start) {
    // Scaled accumulation guards against overflow for badly scaled columns.
    double scale = 0.0;
    for (std::size_t i = start; i < x.size(); ++i) scale = std::max(scale, std::abs(x[i]));
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t i = start; i < x.size(); ++i) {
      const double t = x[i] / scale;
      s += t * t;
    }
    return scale * std::sqrt(s);
  }

  void apply_reflector(std::size_t k, std::vector<double>& y) const {
    const auto& [v, norm2] = reflectors_[k];
    if (norm2 == 0.0) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * y[k + i];
    const double f = 2.0 * dot / norm2;
    for (std::size_t i = 0; i < v.size(); ++i) y[k + i] -= f * v[i];
  }

  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::vector<double>> columns_;
  std::vector<Reflector> reflectors_;
  DenseMatrix r_;
};

struct LeastSquaresSolution {
  std::vector<double> coefficients;
  std::vector<double> residuals;
  /// sigma^2 (X'X)^{-1} with sigma^2 = RSS / (n - p); zero when n == p.
  DenseMatrix coefficient_covariance_classical;
  /// Heteroscedasticity-robust (X'X)^{-1} X' diag(r^2) X (X'X)^{-1}.
  DenseMatrix coefficient_covariance_sandwich;
  /// (X'X)^{-1}, kept for callers assembling other covariance forms.
  DenseMatrix gram_inverse;
  double residual_variance = 0.0;
};

/// X' diag(weights) X.
inline DenseMatrix weighted_gram(const DenseMatrix& x, std::span<const double> weights) {
  const std::size_t p = x.cols();
  DenseMatrix g(p, p);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    const double w = weights[i];
    for (std::size_t a = 0; a < p; ++a) {
      const double wa = w * r[a];
      for (std::size_t b = a; b < p; ++b) g(a, b) += wa * r[b];
    }
  }
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < a; ++b) g(a, b) = g(b, a);
  return g;
}

inline DenseMatrix symmetrize(DenseMatrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      const double avg = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = avg;
      m(j, i) = avg;
    }
  return m;
}

inline LeastSquaresSolution solve_least_squares(const DenseMatrix& design,
                                                std::span<const double> response) {
  if (response.size() != design.rows()) {
    throw ValidationError("solve_least_squares: response has " + std::to_string(response.size()) +
                          " entries, design has " + std::to_string(design.rows()) + " rows");
  }
  const QrFactorization qr(design);
  LeastSquaresSolution out;
  out.coefficients = qr.solve(response);

  const auto fitted = design.multiply(out.coefficients);
  out.residuals.resize(response.size());
  double rss = 0.0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    out.residuals[i] = response[i] - fitted[i];
    rss += out.residuals[i] * out.residuals[i];
  }
  const std::size_t n = design.rows();
  const std::size_t p = design.cols();
  out.residual_variance = n > p ? rss / static_cast<double>(n - p) : 0.0;

  out.gram_inverse = qr.gram_inverse();
  out.coefficient_covariance_classical = out.residual_variance * out.gram_inverse;

  std::vector<double> r2(n);
  for (std::size_t i = 0; i < n; ++i) r2[i] = out.residuals[i] * out.residuals[i];
  const DenseMatrix meat = weighted_gram(design, r2);
  out.coefficient_covariance_sandwich =
      symmetrize(out.gram_inverse * meat * out.gram_inverse);
  return out;
}

}  // namespace feedback_probe
