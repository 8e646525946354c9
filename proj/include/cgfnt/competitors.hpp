#pragma once

// Competitor statistics on scaled residuals: the energy statistic and
// Mardia's skewness and kurtosis. Critical values come from the same kind of
// Monte Carlo null simulation as the main test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cgfnt/calibration.hpp"
#include "cgfnt/ecgf.hpp"
#include "cgfnt/error.hpp"
#include "cgfnt/parallel.hpp"
#include "cgfnt/rng.hpp"
#include "cgfnt/standardize.hpp"

namespace cgfnt {

enum class CompetitorName { kEnergy, kMardiaSkew, kMardiaKurt };

inline const char* to_string(CompetitorName c) {
  switch (c) {
    case CompetitorName::kEnergy: return "energy";
    case CompetitorName::kMardiaSkew: return "mardia_skew";
    case CompetitorName::kMardiaKurt: return "mardia_kurt";
  }
  return "?";
}

struct CompetitorStatistic {
  CompetitorName name = CompetitorName::kEnergy;
  double value = 0.0;
  std::size_t n = 0;
  std::size_t p = 0;
};

/// E||X|| for X ~ N_p(0, I): sqrt(2) Gamma((p+1)/2) / Gamma(p/2).
inline double expected_norm_std_normal(std::size_t p) {
  const double hp = 0.5 * static_cast<double>(p);
  return std::sqrt(2.0) * std::exp(std::lgamma(hp + 0.5) - std::lgamma(hp));
}

/// E||a - X|| for X ~ N_p(0, I) by its power series in ||a||^2.
///
/// Terms are accumulated in long double. Summation stops once a term drops
/// below 1e-12 of the partial sum; hitting 500 terms, or a partial sum that
/// has lost too much to cancellation, raises NumericLimit.
inline double expected_norm_to_std_normal(const Vector& a) {
  if (a.size() < 1) throw InvalidInput("expected_norm_to_std_normal: empty vector");
  if (!a.allFinite()) throw InvalidInput("expected_norm_to_std_normal: non-finite input");
  const auto p = static_cast<std::size_t>(a.size());
  const long double hp = 0.5L * static_cast<long double>(p);
  const long double r2 = static_cast<long double>(a.squaredNorm());
  const long double base = static_cast<long double>(expected_norm_std_normal(p));
  if (r2 == 0.0L) return static_cast<double>(base);

  // k = 0 term: sqrt(2/pi) * (r2/2) * Gamma((p+1)/2) Gamma(3/2) / Gamma(p/2 + 1)
  long double term = std::sqrt(2.0L / static_cast<long double>(M_PI)) * (r2 / 2.0L) *
                     std::exp(std::lgamma(hp + 0.5L) + std::lgamma(1.5L) - std::lgamma(hp + 1.0L));
  long double series = 0.0L;
  long double largest = 0.0L;
  constexpr int kMaxTerms = 500;
  for (int k = 0; k < kMaxTerms; ++k) {
    series += term;
    largest = std::max(largest, std::abs(term));
    const long double total = base + series;
    if (std::abs(term) <= 1e-12L * std::abs(total)) {
      // Rounding in the largest term is carried into the result.
      if (largest * std::numeric_limits<long double>::epsilon() * (k + 1) > 1e-8L * std::abs(total)) {
        throw NumericLimit("expected_norm_to_std_normal: series cancellation at ||a|| = " +
                           std::to_string(std::sqrt(static_cast<double>(r2))));
      }
      return static_cast<double>(total);
    }
    const long double kk = k;
    term *= -(r2 / 2.0L) / (kk + 1.0L) * ((2.0L * kk + 1.0L) * (2.0L * kk + 2.0L)) /
            ((2.0L * kk + 3.0L) * (2.0L * kk + 4.0L)) * (kk + 1.5L) / (kk + hp + 1.0L);
  }
  throw NumericLimit("expected_norm_to_std_normal: series did not converge in 500 terms at ||a|| = " +
                     std::to_string(std::sqrt(static_cast<double>(r2))));
}

/// Monte Carlo estimate of E||a - X|| and its standard error.
struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

inline McEstimate expected_norm_monte_carlo(const Vector& a, std::size_t draws, std::uint64_t seed) {
  if (draws < 2) throw InvalidInput("expected_norm_monte_carlo: need at least two draws");
  Stream rng(tagged_seed(seed, StreamTag::kFallback));
  const auto p = a.size();
  CompensatedSum s, ss;
  for (std::size_t m = 0; m < draws; ++m) {
    double d2 = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double diff = a(j) - rng.normal();
      d2 += diff * diff;
    }
    const double d = std::sqrt(d2);
    s.add(d);
    ss.add(d * d);
  }
  const double nd = static_cast<double>(draws);
  const double mean = s.value() / nd;
  const double var = std::max(0.0, (ss.value() - nd * mean * mean) / (nd - 1.0));
  return {mean, std::sqrt(var / nd)};
}

/// Which constant is subtracted as the middle term of the energy statistic.
enum class EnergyConstant {
  /// 2 Gamma((p+1)/2) / Gamma(p/2), which is E||X - X'|| for independent
  /// standard normals.
  kStandard,
  /// sqrt(2) times the above. Shifts the statistic by a constant only.
  kScaledBySqrt2,
};

struct EnergyOptions {
  EnergyConstant constant = EnergyConstant::kStandard;
  /// Draws used when the series for a residual cannot be evaluated.
  std::size_t fallback_draws = 1'000'000;
  std::uint64_t fallback_seed = 0;
  unsigned threads = 1;
};

struct EnergyResult {
  double value = 0.0;
  /// Residual rows whose E||z - X|| came from the Monte Carlo fallback.
  std::size_t fallbacks = 0;
};

/// n (2/n sum_i E||z_i - X|| - c_p - 1/n^2 sum_{i,j} ||z_i - z_j||).
inline EnergyResult energy_statistic_detailed(const RowMatrix& z, const EnergyOptions& opts = {}) {
  const auto n = static_cast<std::size_t>(z.rows());
  const auto p = static_cast<std::size_t>(z.cols());
  if (n < 1 || p < 1) throw InvalidInput("energy_statistic: empty residual matrix");
  std::vector<double> expected(n);
  std::vector<double> pair_rows(n);
  std::vector<unsigned char> fell_back(n, 0);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    const Vector zi = z.row(static_cast<Eigen::Index>(i)).transpose();
    try {
      expected[i] = expected_norm_to_std_normal(zi);
    } catch (const NumericLimit&) {
      expected[i] = expected_norm_monte_carlo(zi, opts.fallback_draws, substream_seed(opts.fallback_seed, i)).mean;
      fell_back[i] = 1;
    }
    CompensatedSum row;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      row.add((z.row(static_cast<Eigen::Index>(i)) - z.row(static_cast<Eigen::Index>(j))).norm());
    }
    pair_rows[i] = row.value();
  });
  const double nd = static_cast<double>(n);
  const double hp = 0.5 * static_cast<double>(p);
  double c = 2.0 * std::exp(std::lgamma(hp + 0.5) - std::lgamma(hp));
  if (opts.constant == EnergyConstant::kScaledBySqrt2) c *= std::sqrt(2.0);
  EnergyResult out;
  out.value = nd * (2.0 / nd * compensated_sum(expected) - c - compensated_sum(pair_rows) / (nd * nd));
  out.fallbacks = static_cast<std::size_t>(std::count(fell_back.begin(), fell_back.end(), 1));
  return out;
}

inline double energy_statistic(const RowMatrix& z, const EnergyOptions& opts = {}) {
  return energy_statistic_detailed(z, opts).value;
}

/// b_{1,p} = (1/n^2) sum_{i,j} (z_i . z_j)^3.
inline double mardia_skewness(const RowMatrix& z) {
  if (z.rows() < 1) throw InvalidInput("mardia_skewness: empty residual matrix");
  const Matrix g = z * z.transpose();
  CompensatedSum s;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double v = g(i, j);
      s.add(v * v * v);
    }
  }
  const double nd = static_cast<double>(z.rows());
  return s.value() / (nd * nd);
}

/// b_{2,p} = (1/n) sum_i ||z_i||^4.
inline double mardia_kurtosis(const RowMatrix& z) {
  if (z.rows() < 1) throw InvalidInput("mardia_kurtosis: empty residual matrix");
  CompensatedSum s;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double r2 = z.row(i).squaredNorm();
    s.add(r2 * r2);
  }
  return s.value() / static_cast<double>(z.rows());
}

// ---------------------------------------------------------------------------
// Null calibration of the competitors

/// Sorted simulated null values of the three competitor statistics.
struct CompetitorCalibration {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t s_reps = 0;
  std::uint64_t seed = 0;
  EnergyConstant energy_constant = EnergyConstant::kStandard;
  std::vector<double> null_energy;
  std::vector<double> null_skew;
  std::vector<double> null_kurt;
};

/// Statistics for one set of residuals. Energy is computed without the Monte
/// Carlo fallback draws being parallelised.
struct CompetitorValues {
  double energy = 0.0;
  double skew = 0.0;
  double kurt = 0.0;
  std::size_t energy_fallbacks = 0;
};

inline CompetitorValues competitor_values(const RowMatrix& z, EnergyConstant constant = EnergyConstant::kStandard,
                                          std::uint64_t fallback_seed = 0) {
  EnergyOptions opts;
  opts.constant = constant;
  opts.fallback_seed = fallback_seed;
  const auto e = energy_statistic_detailed(z, opts);
  return {e.value, mardia_skewness(z), mardia_kurtosis(z), e.fallbacks};
}

inline CompetitorCalibration calibrate_competitors(std::size_t n, std::size_t p, std::size_t s_reps,
                                                   std::uint64_t seed, unsigned threads = default_threads(),
                                                   EnergyConstant constant = EnergyConstant::kStandard) {
  if (s_reps < 100) throw InvalidInput("calibrate_competitors: need at least 100 replications");
  if (p < 1 || n < 2 || n < p + 1) throw InvalidInput("calibrate_competitors: need n >= p + 1 and n >= 2");
  CompetitorCalibration cal;
  cal.n = n;
  cal.p = p;
  cal.s_reps = s_reps;
  cal.seed = seed;
  cal.energy_constant = constant;
  cal.null_energy.resize(s_reps);
  cal.null_skew.resize(s_reps);
  cal.null_kurt.resize(s_reps);
  const std::uint64_t base = tagged_seed(seed, StreamTag::kCompetitorNull);
  parallel_for(s_reps, threads, [&](std::size_t s) {
    Stream rng(base, s);
    RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (;;) {
      detail::draw_standard_normal(rng, x);
      try {
        const auto st = scaled_residuals(x);
        const auto v = competitor_values(st.residuals, constant, substream_seed(base, s));
        cal.null_energy[s] = v.energy;
        cal.null_skew[s] = v.skew;
        cal.null_kurt[s] = v.kurt;
        return;
      } catch (const SingularCovariance&) {
      }
    }
  });
  std::sort(cal.null_energy.begin(), cal.null_energy.end());
  std::sort(cal.null_skew.begin(), cal.null_skew.end());
  std::sort(cal.null_kurt.begin(), cal.null_kurt.end());
  return cal;
}

/// p-values against a competitor calibration. Energy and skewness reject for
/// large values; kurtosis is two-sided because short-tailed alternatives
/// push it down.
struct CompetitorPValues {
  double energy = 1.0;
  double skew = 1.0;
  double kurt = 1.0;
};

inline CompetitorPValues competitor_p_values(const CompetitorValues& v, const CompetitorCalibration& cal) {
  return {upper_p_value(v.energy, cal.null_energy), upper_p_value(v.skew, cal.null_skew),
          two_sided_p_value(v.kurt, cal.null_kurt)};
}

}  // namespace cgfnt
