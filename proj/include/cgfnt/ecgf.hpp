#pragma once

// Empirical moment / cumulant generating function machinery and the
// Hessian-based normality statistics.
//
// For residual rows z_1..z_n and t in R^p,
//   M(t)      = (1/n) sum exp(t.z_i)
//   grad M(t) = (1/n) sum z_i exp(t.z_i)
//   H_M(t)    = (1/n) sum z_i z_i^T exp(t.z_i)
//   H_L(t)    = (M H_M - grad grad^T) / M^2.
// H_L(t) is the covariance of the z_i under the exponentially tilted weights
// W_i(t) = exp(t.z_i) / sum_j exp(t.z_j); it is computed in that centred form,
// which is positive semidefinite by construction and insensitive to the
// max-shift applied to the exponents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cgfnt/error.hpp"
#include "cgfnt/parallel.hpp"
#include "cgfnt/rng.hpp"
#include "cgfnt/standardize.hpp"

namespace cgfnt {

/// Compensated (Neumaier) running sum. Used wherever a reduction must not
/// depend on how work was split, only on the fixed index order.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

// ---------------------------------------------------------------------------
// Evaluation points

/// Fixed evaluation points t_1..t_N, one per row.
struct EvalPointSet {
  RowMatrix points;
  double radius = 0.0;
  std::uint64_t seed = 0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(points.cols()); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(points.rows()); }

  /// Wraps an explicit list of points (e.g. the single origin, or a grid).
  static EvalPointSet from_points(RowMatrix pts, std::uint64_t seed = 0) {
    if (pts.rows() < 1 || pts.cols() < 1) throw InvalidInput("point set must be nonempty");
    if (!pts.allFinite()) throw InvalidInput("point set contains non-finite entries");
    EvalPointSet out;
    out.radius = pts.rowwise().norm().maxCoeff();
    out.points = std::move(pts);
    out.seed = seed;
    return out;
  }

  friend bool operator==(const EvalPointSet& a, const EvalPointSet& b) {
    return a.radius == b.radius && a.seed == b.seed && a.points.rows() == b.points.rows() &&
           a.points.cols() == b.points.cols() && a.points == b.points;
  }
};

/// N points drawn uniformly from the closed ball of radius R in R^p:
/// a normalised Gaussian direction scaled by R * U^{1/p}.
inline EvalPointSet sample_ball_points(std::size_t p, std::size_t n_points, double radius,
                                       std::uint64_t seed) {
  if (p < 1) throw InvalidInput("sample_ball_points: p must be >= 1");
  if (n_points < 1) throw InvalidInput("sample_ball_points: need at least one point");
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw InvalidInput("sample_ball_points: radius must be positive and finite");
  }
  Stream rng(tagged_seed(seed, StreamTag::kPoints));
  EvalPointSet out;
  out.points.resize(static_cast<Eigen::Index>(n_points), static_cast<Eigen::Index>(p));
  out.radius = radius;
  out.seed = seed;
  Vector dir(static_cast<Eigen::Index>(p));
  for (std::size_t l = 0; l < n_points; ++l) {
    double norm = 0.0;
    do {
      for (std::size_t j = 0; j < p; ++j) dir(static_cast<Eigen::Index>(j)) = rng.normal();
      norm = dir.norm();
    } while (!(norm > 0.0));
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(p));
    out.points.row(static_cast<Eigen::Index>(l)) = (dir * (r / norm)).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-point evaluation

struct EcgfEval {
  double log_m = 0.0;  // log M(t); kept because M itself can overflow for large |t|
  double m = 0.0;
  Vector grad;
  Matrix hess_m;
  Matrix hess_lambda;
};

namespace detail {

/// Builds an EcgfEval from precomputed exponents a_i = t.z_i using an
/// arbitrary shift c (weights exp(a_i - c)). Every output is invariant to c
/// up to rounding as long as the weights stay representable.
inline EcgfEval ecgf_from_exponents(const RowMatrix& z, std::span<const double> a, double shift) {
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();
  std::vector<double> w(static_cast<std::size_t>(n));
  double sw = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(a[static_cast<std::size_t>(i)] - shift);
    sw += w[static_cast<std::size_t>(i)];
  }
  Vector mu = Vector::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) mu += (w[static_cast<std::size_t>(i)] / sw) * z.row(i).transpose();
  Matrix cov = Matrix::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector d = z.row(i).transpose() - mu;
    cov.noalias() += (w[static_cast<std::size_t>(i)] / sw) * d * d.transpose();
  }
  EcgfEval out;
  out.log_m = shift + std::log(sw / static_cast<double>(n));
  out.m = std::exp(out.log_m);
  out.hess_lambda = (0.5 * (cov + cov.transpose())).eval();
  out.grad = out.m * mu;
  out.hess_m = out.m * (out.hess_lambda + mu * mu.transpose());
  return out;
}

}  // namespace detail

/// M, its gradient and Hessian, and the CGF Hessian at a single point t.
inline EcgfEval ecgf_eval(const RowMatrix& z, const Vector& t) {
  if (z.rows() < 1) throw InvalidInput("ecgf_eval: empty residual matrix");
  if (t.size() != z.cols()) throw InvalidInput("ecgf_eval: dimension mismatch");
  if (!t.allFinite()) throw InvalidInput("ecgf_eval: non-finite t");
  std::vector<double> a(static_cast<std::size_t>(z.rows()));
  double c = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    a[static_cast<std::size_t>(i)] = z.row(i).dot(t.transpose());
    c = std::max(c, a[static_cast<std::size_t>(i)]);
  }
  return detail::ecgf_from_exponents(z, a, c);
}

namespace detail {

/// Second derivative of the univariate empirical CGF of x_0..x_{n-1}
/// (stride `stride`) at t. `buffer` must hold n doubles.
inline double cgf_second_strided(const double* x, std::size_t n, std::size_t stride, double t,
                                 double* buffer) {
  double c = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) c = std::max(c, t * x[i * stride]);
  double sw = 0.0;
  double swx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i * stride];
    const double wi = std::exp(t * xi - c);
    buffer[i] = wi;
    sw += wi;
    swx += wi * xi;
  }
  const double mu = swx / sw;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i * stride] - mu;
    var += buffer[i] * d * d;
  }
  return var / sw;
}

}  // namespace detail

/// Lambda''(t) of the empirical CGF of one column: the tilted variance.
inline double marginal_cgf_second(std::span<const double> column, double t) {
  if (column.empty()) throw InvalidInput("marginal_cgf_second: empty column");
  std::vector<double> buffer(column.size());
  return detail::cgf_second_strided(column.data(), column.size(), 1, t, buffer.data());
}

inline double marginal_cgf_second(const Vector& column, double t) {
  return marginal_cgf_second(std::span<const double>(column.data(), static_cast<std::size_t>(column.size())), t);
}

// ---------------------------------------------------------------------------
// Statistics

/// H = n sum_l sum_{i<j} H_L,ij(t_l)^2 (dependence part) and
/// D = n sum_l sum_i (Lambda_i''(t_li) - 1)^2 (marginal part).
struct PairStatistics {
  double h_stat = 0.0;
  double d_stat = 0.0;
  std::size_t n = 0;
  std::uint64_t point_set_seed = 0;
};

namespace detail {

struct PointContribution {
  double h = 0.0;
  double d = 0.0;
};

/// Contribution of a single evaluation point, before the factor n.
/// `a` and `w` are scratch buffers of length n; `mu` of length p.
inline PointContribution point_contribution(const RowMatrix& z, const double* t, double* a, double* w,
                                            double* mu) {
  const std::size_t n = static_cast<std::size_t>(z.rows());
  const std::size_t p = static_cast<std::size_t>(z.cols());
  const double* zd = z.data();
  PointContribution out;

  // Off-diagonal entries of the full Hessian at t.
  if (p > 1) {
    double c = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) s += zd[i * p + j] * t[j];
      a[i] = s;
      c = std::max(c, s);
    }
    double sw = 0.0;
    for (std::size_t j = 0; j < p; ++j) mu[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = std::exp(a[i] - c);
      w[i] = wi;
      sw += wi;
      for (std::size_t j = 0; j < p; ++j) mu[j] += wi * zd[i * p + j];
    }
    for (std::size_t j = 0; j < p; ++j) mu[j] /= sw;
    double h = 0.0;
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t s = r + 1; s < p; ++s) {
        double cov = 0.0;
        for (std::size_t i = 0; i < n; ++i) cov += w[i] * (zd[i * p + r] - mu[r]) * (zd[i * p + s] - mu[s]);
        cov /= sw;
        h += cov * cov;
      }
    }
    out.h = h;
  }

  // Diagonal of D(t): the marginal CGF second derivative at the axis point s_j.
  double d = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    const double v = cgf_second_strided(zd + j, n, p, t[j], w) - 1.0;
    d += v * v;
  }
  out.d = d;
  return out;
}

}  // namespace detail

/// Computes (H, D) for residuals z on the point set. Points are processed on
/// up to `threads` workers; the reduction runs in point order, so the result
/// does not depend on the thread count.
inline PairStatistics stat_pair(const RowMatrix& z, const EvalPointSet& pts, unsigned threads = 1) {
  if (z.rows() < 1) throw InvalidInput("stat_pair: empty residual matrix");
  if (static_cast<std::size_t>(z.cols()) != pts.dim()) {
    throw InvalidInput("stat_pair: point set dimension " + std::to_string(pts.dim()) +
                       " does not match residual dimension " + std::to_string(z.cols()));
  }
  const std::size_t n = static_cast<std::size_t>(z.rows());
  const std::size_t p = pts.dim();
  const std::size_t count = pts.size();
  std::vector<double> hs(count);
  std::vector<double> ds(count);

  if (threads <= 1) {
    std::vector<double> a(n), w(n), mu(p);
    for (std::size_t l = 0; l < count; ++l) {
      const auto c = detail::point_contribution(z, pts.points.data() + l * p, a.data(), w.data(), mu.data());
      hs[l] = c.h;
      ds[l] = c.d;
    }
  } else {
    parallel_for(count, threads, [&](std::size_t l) {
      std::vector<double> a(n), w(n), mu(p);
      const auto c = detail::point_contribution(z, pts.points.data() + l * p, a.data(), w.data(), mu.data());
      hs[l] = c.h;
      ds[l] = c.d;
    });
  }

  PairStatistics out;
  out.n = n;
  out.point_set_seed = pts.seed;
  const double nn = static_cast<double>(n);
  out.h_stat = nn * compensated_sum(hs);
  out.d_stat = nn * compensated_sum(ds);
  return out;
}

inline PairStatistics stat_pair(const Standardization& s, const EvalPointSet& pts, unsigned threads = 1) {
  return stat_pair(s.residuals, pts, threads);
}

/// Univariate statistic n * sum_l (Lambda''(t_l) - 1)^2 on standardized data.
inline double stat_univariate(std::span<const double> z, const EvalPointSet& pts) {
  if (z.empty()) throw InvalidInput("stat_univariate: empty sample");
  if (pts.dim() != 1) throw InvalidInput("stat_univariate: point set must be one-dimensional");
  std::vector<double> buffer(z.size());
  std::vector<double> terms(pts.size());
  for (std::size_t l = 0; l < pts.size(); ++l) {
    const double v = detail::cgf_second_strided(z.data(), z.size(), 1, pts.points(static_cast<Eigen::Index>(l), 0),
                                                buffer.data()) -
                     1.0;
    terms[l] = v * v;
  }
  return static_cast<double>(z.size()) * compensated_sum(terms);
}

inline double stat_univariate(const Vector& z, const EvalPointSet& pts) {
  return stat_univariate(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())), pts);
}

}  // namespace cgfnt
