#pragma once

// Sample moments and scaled residuals.
//
// Given rows X_1..X_n in R^p, the scaled residuals are
//   Z_i = S^{-1/2} (X_i - mean),   S = (1/n) sum (X_i - mean)(X_i - mean)^T,
// with S^{-1/2} the unique symmetric positive-definite inverse square root.
// Under multivariate normality their joint law does not depend on the mean
// or covariance of X, which is what makes Monte Carlo calibration possible.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "cgfnt/error.hpp"

namespace cgfnt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Observations are stored one per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n x p block of finite observations, n >= 1, p >= 1.
class SampleMatrix {
 public:
  SampleMatrix() = default;

  explicit SampleMatrix(RowMatrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1) {
      throw InvalidInput("sample must have at least one row and one column");
    }
    if (!data_.allFinite()) throw InvalidInput("sample contains non-finite entries");
  }

  /// Univariate convenience: a single column.
  static SampleMatrix column(const Vector& values) {
    RowMatrix m(values.size(), 1);
    m.col(0) = values;
    return SampleMatrix(std::move(m));
  }

  std::size_t n() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(data_.cols()); }
  const RowMatrix& data() const noexcept { return data_; }

 private:
  RowMatrix data_;
};

struct Standardization {
  Vector mean;
  Matrix cov;        // biased, divisor n
  Matrix inv_sqrt;   // symmetric PD, inv_sqrt * cov * inv_sqrt = I
  RowMatrix residuals;
};

inline Vector sample_mean(const RowMatrix& x) {
  if (x.rows() < 1) throw InvalidInput("sample_mean: empty sample");
  return x.colwise().mean().transpose();
}

inline Vector sample_mean(const SampleMatrix& x) { return sample_mean(x.data()); }

inline Matrix sample_cov_biased(const RowMatrix& x) {
  if (x.rows() < 2) throw InvalidInput("sample_cov_biased: need at least two rows");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mean;
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
  // Force exact symmetry; the product above is symmetric only up to rounding.
  return (0.5 * (cov + cov.transpose())).eval();
}

inline Matrix sample_cov_biased(const SampleMatrix& x) { return sample_cov_biased(x.data()); }

/// Relative eigenvalue floor below which a covariance is treated as singular.
inline constexpr double kSingularityThreshold = 1e-12;

/// Unique symmetric positive-definite A with A s A = I.
/// Throws SingularCovariance when lambda_min <= 1e-12 * lambda_max.
inline Matrix sym_inv_sqrt(const Matrix& s) {
  if (s.rows() != s.cols() || s.rows() < 1) throw InvalidInput("sym_inv_sqrt: matrix must be square");
  if (!s.allFinite()) throw InvalidInput("sym_inv_sqrt: non-finite entries");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidInput("sym_inv_sqrt: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) throw NumericLimit("sym_inv_sqrt: eigensolver failed");
  const Vector& ev = eig.eigenvalues();  // ascending
  const double largest = ev(ev.size() - 1);
  if (!(largest > 0.0) || ev(0) <= kSingularityThreshold * largest) {
    throw SingularCovariance("covariance is singular (smallest eigenvalue " +
                             std::to_string(ev(0)) + ", largest " + std::to_string(largest) + ")");
  }
  const Matrix& q = eig.eigenvectors();
  Matrix a = q * ev.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
  return (0.5 * (a + a.transpose())).eval();
}

inline Standardization scaled_residuals(const RowMatrix& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  if (n < 2 || n < p + 1) {
    throw InvalidInput("scaled_residuals: need n >= p + 1 and n >= 2 (n=" + std::to_string(n) +
                       ", p=" + std::to_string(p) + ")");
  }
  Standardization out;
  out.mean = sample_mean(x);
  const RowMatrix centered = x.rowwise() - out.mean.transpose();
  out.cov = (centered.transpose() * centered) / static_cast<double>(n);
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  out.inv_sqrt = sym_inv_sqrt(out.cov);
  // Z_i = A (X_i - mean); rows of Z are (X_i - mean)^T A since A is symmetric.
  out.residuals = centered * out.inv_sqrt;
  return out;
}

inline Standardization scaled_residuals(const SampleMatrix& x) { return scaled_residuals(x.data()); }

}  // namespace cgfnt
