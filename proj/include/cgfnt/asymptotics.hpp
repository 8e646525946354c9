#pragma once

// First-order expansions of the empirical CGF Hessian under the null, and
// numerical checks of them.
//
// For x, t in R^p with A = xx^T - I and M0 = exp(|t|^2 / 2):
//   f0 = M0 (-t.x - (t.x)^2/2 + |t|^2/2)
//   f1 = M0 (-(I + tt^T) x - (1/2)(2I + tt^T) A t)
//   f2 = M0 (-(1/2) A (I + tt^T) - x t^T - (1/2)(I + tt^T) A - t x^T
//            - (1/2) sum_{h,k} (Q^h + t_h (tt^T + I)) t_k A_hk - (I + tt^T)(t.x))
//   g1 = M0 exp(t.x) (xx^T + tt^T - tx^T - xt^T - I)
//   g2 = M0 (f2 + (tt^T + I) f0 - t f1^T - f1 t^T - 2 f0 I)
//   h  = exp(-|t|^2) (g1 + g2)
// where Q^h = d(tt^T)/dt_h = e_h t^T + t e_h^T. The double sum collapses to
// b t^T + t b^T + (t.b)(tt^T + I) with b = A t.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cgfnt/calibration.hpp"
#include "cgfnt/distributions.hpp"
#include "cgfnt/ecgf.hpp"
#include "cgfnt/error.hpp"
#include "cgfnt/parallel.hpp"
#include "cgfnt/rng.hpp"
#include "cgfnt/standardize.hpp"

namespace cgfnt {

struct InfluenceEval {
  double f0 = 0.0;
  Vector f1;
  Matrix f2;
  Matrix g1;
  Matrix g2;
  Matrix h;
};

/// Q^h = d(tt^T)/dt_h, with h zero-based.
inline Matrix q_matrix(const Vector& t, Eigen::Index h) {
  if (h < 0 || h >= t.size()) throw InvalidInput("q_matrix: index out of range");
  Matrix q = Matrix::Zero(t.size(), t.size());
  q.row(h) = t.transpose();
  q.col(h) = t;
  q(h, h) = 2.0 * t(h);
  return q;
}

/// The double sum in f2, evaluated term by term from Q^h. Slow; kept as a
/// cross-check on the collapsed form used by influence_eval.
inline Matrix f2_sum_term_direct(const Vector& x, const Vector& t) {
  const auto p = t.size();
  const Matrix tt = t * t.transpose();
  const Matrix id = Matrix::Identity(p, p);
  Matrix out = Matrix::Zero(p, p);
  for (Eigen::Index h = 0; h < p; ++h) {
    const Matrix bracket = q_matrix(t, h) + tt * t(h) + t(h) * id;
    for (Eigen::Index k = 0; k < p; ++k) out += bracket * t(k) * (x(h) * x(k) - (h == k ? 1.0 : 0.0));
  }
  return out;
}

inline InfluenceEval influence_eval(const Vector& x, const Vector& t) {
  if (x.size() != t.size() || x.size() < 1) throw InvalidInput("influence_eval: dimension mismatch");
  if (!x.allFinite() || !t.allFinite()) throw InvalidInput("influence_eval: non-finite input");
  const auto p = x.size();
  const Matrix id = Matrix::Identity(p, p);
  const Matrix tt = t * t.transpose();
  const Matrix a = x * x.transpose() - id;
  const double tx = t.dot(x);
  const double t2 = t.squaredNorm();
  const double m0 = std::exp(0.5 * t2);

  InfluenceEval out;
  out.f0 = m0 * (-tx - 0.5 * tx * tx + 0.5 * t2);
  out.f1 = m0 * (-(id + tt) * x - 0.5 * (2.0 * id + tt) * a * t);

  const Vector b = a * t;
  const Matrix sum_term = b * t.transpose() + t * b.transpose() + t.dot(b) * (tt + id);
  out.f2 = m0 * (-0.5 * a * (id + tt) - x * t.transpose() - 0.5 * (id + tt) * a - t * x.transpose() -
                 0.5 * sum_term - (id + tt) * tx);

  out.g1 = m0 * std::exp(tx) * (x * x.transpose() + tt - t * x.transpose() - x * t.transpose() - id);
  out.g2 = m0 * (out.f2 + (tt + id) * out.f0 - t * out.f1.transpose() - out.f1 * t.transpose() - 2.0 * out.f0 * id);
  out.h = std::exp(-t2) * (out.g1 + out.g2);
  return out;
}

enum class InfluenceFunction { kF0, kF1, kF2, kG1, kG2, kH };

inline const char* to_string(InfluenceFunction f) {
  switch (f) {
    case InfluenceFunction::kF0: return "f0";
    case InfluenceFunction::kF1: return "f1";
    case InfluenceFunction::kF2: return "f2";
    case InfluenceFunction::kG1: return "g1";
    case InfluenceFunction::kG2: return "g2";
    case InfluenceFunction::kH: return "h";
  }
  return "?";
}

inline constexpr InfluenceFunction kAllInfluenceFunctions[] = {InfluenceFunction::kF0, InfluenceFunction::kF1,
                                                               InfluenceFunction::kF2, InfluenceFunction::kG1,
                                                               InfluenceFunction::kG2, InfluenceFunction::kH};

/// Components of one function flattened: scalar, vector, or the upper
/// triangle (row-major, diagonal included) of a matrix.
inline std::vector<double> influence_components(const InfluenceEval& e, InfluenceFunction which) {
  auto upper = [](const Matrix& m) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = i; j < m.cols(); ++j) v.push_back(m(i, j));
    }
    return v;
  };
  auto full = [](const Matrix& m) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
    }
    return v;
  };
  switch (which) {
    case InfluenceFunction::kF0: return {e.f0};
    case InfluenceFunction::kF1: return std::vector<double>(e.f1.data(), e.f1.data() + e.f1.size());
    case InfluenceFunction::kF2: return full(e.f2);
    case InfluenceFunction::kG1: return upper(e.g1);
    case InfluenceFunction::kG2: return upper(e.g2);
    case InfluenceFunction::kH: return upper(e.h);
  }
  return {};
}

struct MeanZeroResult {
  InfluenceFunction which = InfluenceFunction::kF0;
  std::vector<double> mean;
  std::vector<double> se;
  /// max_k |mean_k| / se_k over components with se_k > 0.
  double max_abs_z = 0.0;
  /// Every component within `tolerance_se` standard errors of zero.
  bool within(double tolerance_se) const {
    for (std::size_t k = 0; k < mean.size(); ++k) {
      if (std::abs(mean[k]) > tolerance_se * se[k] + 1e-12) return false;
    }
    return true;
  }
};

namespace detail {

/// Componentwise sums over m draws, accumulated in fixed blocks so the result
/// does not depend on the thread count.
inline std::vector<MeanZeroResult> mean_zero_all(std::span<const InfluenceFunction> which, const Vector& t,
                                                 std::size_t m, std::uint64_t seed, unsigned threads) {
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (m + kBlock - 1) / kBlock;
  const auto p = t.size();
  const std::uint64_t base = tagged_seed(seed, StreamTag::kVerify);

  std::vector<std::size_t> width(which.size());
  {
    const auto probe = influence_eval(Vector::Zero(p), t);
    for (std::size_t f = 0; f < which.size(); ++f) width[f] = influence_components(probe, which[f]).size();
  }
  // sums[b][f] holds (sum, sum of squares) per component for block b.
  std::vector<std::vector<std::vector<double>>> sums(blocks, std::vector<std::vector<double>>(which.size()));
  parallel_for(blocks, threads, [&](std::size_t b) {
    Stream rng(base, b);
    auto& mine = sums[b];
    for (std::size_t f = 0; f < which.size(); ++f) mine[f].assign(2 * width[f], 0.0);
    Vector x(p);
    const std::size_t end = std::min(m, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) x(j) = rng.normal();
      const auto e = influence_eval(x, t);
      for (std::size_t f = 0; f < which.size(); ++f) {
        const auto c = influence_components(e, which[f]);
        for (std::size_t k = 0; k < c.size(); ++k) {
          mine[f][k] += c[k];
          mine[f][width[f] + k] += c[k] * c[k];
        }
      }
    }
  });

  std::vector<MeanZeroResult> out(which.size());
  const double md = static_cast<double>(m);
  for (std::size_t f = 0; f < which.size(); ++f) {
    out[f].which = which[f];
    out[f].mean.resize(width[f]);
    out[f].se.resize(width[f]);
    for (std::size_t k = 0; k < width[f]; ++k) {
      CompensatedSum s, ss;
      for (std::size_t b = 0; b < blocks; ++b) {
        s.add(sums[b][f][k]);
        ss.add(sums[b][f][width[f] + k]);
      }
      const double mean = s.value() / md;
      const double var = std::max(0.0, (ss.value() - md * mean * mean) / (md - 1.0));
      out[f].mean[k] = mean;
      out[f].se[k] = std::sqrt(var / md);
      if (out[f].se[k] > 0.0) out[f].max_abs_z = std::max(out[f].max_abs_z, std::abs(mean) / out[f].se[k]);
    }
  }
  return out;
}

}  // namespace detail

/// Monte Carlo mean and standard error of one influence function over m
/// draws of N_p(0, I).
inline MeanZeroResult mean_zero_check(InfluenceFunction which, const Vector& t, std::size_t m, std::uint64_t seed,
                                      unsigned threads = default_threads()) {
  if (m < 10'000) throw InvalidInput("mean_zero_check: need at least 10^4 draws");
  if (t.size() < 1 || !t.allFinite()) throw InvalidInput("mean_zero_check: invalid t");
  const InfluenceFunction one[] = {which};
  return detail::mean_zero_all(one, t, m, seed, threads).front();
}

/// All six functions from a single set of draws.
inline std::vector<MeanZeroResult> mean_zero_check_all(const Vector& t, std::size_t m, std::uint64_t seed,
                                                       unsigned threads = default_threads()) {
  if (m < 10'000) throw InvalidInput("mean_zero_check: need at least 10^4 draws");
  if (t.size() < 1 || !t.allFinite()) throw InvalidInput("mean_zero_check: invalid t");
  return detail::mean_zero_all(kAllInfluenceFunctions, t, m, seed, threads);
}

// ---------------------------------------------------------------------------
// Linearization residual

struct ConvergenceReport {
  std::vector<std::size_t> n_grid;
  std::vector<double> residual_norms;  // per-n medians
  double slope = 0.0;                  // least-squares slope of log median on log n
  bool strictly_decreasing() const {
    for (std::size_t k = 1; k < residual_norms.size(); ++k) {
      if (!(residual_norms[k] < residual_norms[k - 1])) return false;
    }
    return true;
  }
};

/// Frobenius norm of sqrt(n)(H_L(t) - I) - n^{-1/2} sum_i h(X_i; t) for one
/// N_p(0, I) sample x (rows), with H_L computed on the scaled residuals.
inline double linearization_residual_once(const RowMatrix& x, const Vector& t) {
  const auto n = static_cast<double>(x.rows());
  const auto st = scaled_residuals(x);
  const Matrix hl = ecgf_eval(st.residuals, t).hess_lambda;
  Matrix sum_h = Matrix::Zero(t.size(), t.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) sum_h += influence_eval(x.row(i).transpose(), t).h;
  const Matrix id = Matrix::Identity(t.size(), t.size());
  return (std::sqrt(n) * (hl - id) - sum_h / std::sqrt(n)).norm();
}

inline ConvergenceReport linearization_residual(std::span<const std::size_t> n_grid, const Vector& t, std::size_t reps,
                                                std::uint64_t seed, unsigned threads = default_threads()) {
  if (n_grid.empty()) throw InvalidInput("linearization_residual: empty n grid");
  if (!std::is_sorted(n_grid.begin(), n_grid.end())) throw InvalidInput("linearization_residual: n grid must ascend");
  if (reps < 1) throw InvalidInput("linearization_residual: need reps >= 1");
  if (t.size() < 1 || !t.allFinite() || t.norm() > 1.0) {
    throw InvalidInput("linearization_residual: need finite t with |t| <= 1");
  }
  const auto p = static_cast<std::size_t>(t.size());
  ConvergenceReport rep;
  rep.n_grid.assign(n_grid.begin(), n_grid.end());
  const std::uint64_t base = tagged_seed(seed, StreamTag::kVerify);
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const std::size_t n = n_grid[g];
    if (n < p + 1) throw InvalidInput("linearization_residual: n must be >= p + 1");
    std::vector<double> res(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
      Stream rng(substream_seed(base, g), r);
      RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
      detail::draw_standard_normal(rng, x);
      res[r] = linearization_residual_once(x, t);
    });
    std::sort(res.begin(), res.end());
    const double med = reps % 2 ? res[reps / 2] : 0.5 * (res[reps / 2 - 1] + res[reps / 2]);
    rep.residual_norms.push_back(med);
  }
  if (n_grid.size() >= 2) {
    double mx = 0, my = 0;
    const double k = static_cast<double>(n_grid.size());
    for (std::size_t g = 0; g < n_grid.size(); ++g) {
      mx += std::log(static_cast<double>(n_grid[g]));
      my += std::log(rep.residual_norms[g]);
    }
    mx /= k;
    my /= k;
    double sxy = 0, sxx = 0;
    for (std::size_t g = 0; g < n_grid.size(); ++g) {
      const double dx = std::log(static_cast<double>(n_grid[g])) - mx;
      sxy += dx * (std::log(rep.residual_norms[g]) - my);
      sxx += dx * dx;
    }
    rep.slope = sxx > 0 ? sxy / sxx : 0.0;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Consistency limits

namespace detail {

/// Lambda''(s) for U(-1/2, 1/2): 1/s^2 - 1/(4 sinh^2(s/2)).
inline double uniform_centered_cgf_second(double s) {
  if (std::abs(s) < 1e-2) {
    const double s2 = s * s;
    return 1.0 / 12.0 - s2 / 240.0 + s2 * s2 / 6048.0;
  }
  const double sh = std::sinh(0.5 * s);
  return 1.0 / (s * s) - 1.0 / (4.0 * sh * sh);
}

}  // namespace detail

/// Second derivative of the CGF of the standardized marginal, for the
/// families with a closed form. Throws InvalidInput outside the MGF domain
/// or for unsupported families.
inline double standardized_cgf_second(const MarginalSpec& m, double t) {
  return std::visit(
      overloaded{
          [&](const marginal::Normal&) { return 1.0; },
          [&](const marginal::Exponential&) {
            if (!(t < 1.0)) throw InvalidInput("standardized exponential CGF: need t < 1");
            return 1.0 / ((1.0 - t) * (1.0 - t));
          },
          [&](const marginal::Gamma& g) {
            const double rk = std::sqrt(g.shape);
            if (!(t < rk)) throw InvalidInput("standardized gamma CGF: need t < sqrt(shape)");
            const double u = 1.0 - t / rk;
            return 1.0 / (u * u);
          },
          [&](const marginal::ChiSq& c) {
            const double rk = std::sqrt(0.5 * c.df);
            if (!(t < rk)) throw InvalidInput("standardized chi-square CGF: need t < sqrt(df / 2)");
            const double u = 1.0 - t / rk;
            return 1.0 / (u * u);
          },
          [&](const marginal::Uniform&) {
            const double r12 = std::sqrt(12.0);
            return 12.0 * detail::uniform_centered_cgf_second(r12 * t);
          },
          [&](const auto&) -> double {
            throw InvalidInput("no closed-form standardized CGF for " + to_string(m));
          },
      },
      m);
}

struct ConsistencyResult {
  double empirical = 0.0;  // U / n
  double analytic = 0.0;   // sum_l (Lambda''(t_l) - 1)^2
  double relative_error() const {
    return analytic != 0.0 ? std::abs(empirical - analytic) / std::abs(analytic) : std::abs(empirical);
  }
};

/// U/n from an n-sample of the marginal against its almost-sure limit.
inline ConsistencyResult consistency_limit_check(const MarginalSpec& m, const EvalPointSet& pts, std::size_t n,
                                                 std::uint64_t seed) {
  if (pts.dim() != 1) throw InvalidInput("consistency_limit_check: point set must be one-dimensional");
  if (n < 2) throw InvalidInput("consistency_limit_check: need n >= 2");
  ConsistencyResult r;
  std::vector<double> terms(pts.size());
  for (std::size_t l = 0; l < pts.size(); ++l) {
    const double v = standardized_cgf_second(m, pts.points(static_cast<Eigen::Index>(l), 0)) - 1.0;
    terms[l] = v * v;
  }
  r.analytic = compensated_sum(terms);
  const SampleMatrix x = sample(ProductMarginal{m, 1}, n, seed);
  const auto st = scaled_residuals(x);
  r.empirical = stat_univariate(std::span<const double>(st.residuals.data(), n), pts) / static_cast<double>(n);
  return r;
}

/// H/n on standardized samples from an equicorrelated normal law (a Gaussian
/// copula with normal marginals), one value per n. The limit is zero.
inline std::vector<double> multivariate_consistency_check(std::size_t p, double rho, const EvalPointSet& pts,
                                                          std::span<const std::size_t> n_grid, std::uint64_t seed,
                                                          unsigned threads = default_threads()) {
  if (pts.dim() != p || p < 2) throw InvalidInput("multivariate_consistency_check: need p >= 2 matching the points");
  const DistributionSpec spec = CopulaLaw{copula::Gaussian{rho}, std::vector<MarginalSpec>(p, marginal::Normal{})};
  std::vector<double> out;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const auto x = sample(spec, n_grid[g], substream_seed(seed, g));
    const auto pair = stat_pair(scaled_residuals(x).residuals, pts, threads);
    out.push_back(pair.h_stat / static_cast<double>(n_grid[g]));
  }
  return out;
}

}  // namespace cgfnt
