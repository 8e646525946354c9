#pragma once

// Monte Carlo null calibration.
//
// The statistics depend on the data only through the scaled residuals, whose
// null law is that of a N_p(0, I) sample. Simulating S such samples gives the
// studentization constants (mean and SD of H and D), the null distribution of
// the combined statistic T, critical values and p-values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgfnt/ecgf.hpp"
#include "cgfnt/error.hpp"
#include "cgfnt/parallel.hpp"
#include "cgfnt/rng.hpp"
#include "cgfnt/standardize.hpp"

namespace cgfnt {

enum class CalibrationKind : std::uint8_t { kMultivariate = 0, kUnivariate = 1 };

inline const char* to_string(CalibrationKind k) {
  return k == CalibrationKind::kMultivariate ? "multivariate" : "univariate";
}

/// Simulated null distribution for one (n, p, point set) cell.
///
/// Multivariate: null_t holds the studentized maxima; null_h / null_d hold the
/// raw component statistics. Univariate: null_t holds raw U values, null_d
/// repeats them, null_h is empty and the H constants are zero.
/// All three arrays are sorted ascending.
struct NullCalibration {
  CalibrationKind kind = CalibrationKind::kMultivariate;
  std::size_t n = 0;
  std::size_t p = 0;
  EvalPointSet point_set;
  std::size_t s_reps = 0;
  std::uint64_t seed = 0;
  double mean_h = 0.0;
  double sd_h = 0.0;
  double mean_d = 0.0;
  double sd_d = 0.0;
  std::vector<double> null_t;
  std::vector<double> null_h;
  std::vector<double> null_d;
  /// Replications whose simulated covariance came out singular and were redrawn.
  std::size_t redraws = 0;

  /// Throws CorruptCalibration if any structural invariant fails.
  void validate() const {
    auto fail = [](const std::string& why) { throw CorruptCalibration("calibration invalid: " + why); };
    if (n < 2) fail("n < 2");
    if (p < 1 || point_set.dim() != p) fail("point set dimension does not match p");
    if (point_set.size() < 1) fail("empty point set");
    if (null_t.size() != s_reps || s_reps < 1) fail("null_t length does not match s_reps");
    if (!std::is_sorted(null_t.begin(), null_t.end())) fail("null_t is not sorted");
    if (!std::is_sorted(null_h.begin(), null_h.end())) fail("null_h is not sorted");
    if (!std::is_sorted(null_d.begin(), null_d.end())) fail("null_d is not sorted");
    if (null_d.size() != s_reps) fail("null_d length does not match s_reps");
    if (kind == CalibrationKind::kMultivariate) {
      if (p < 2) fail("multivariate calibration needs p >= 2");
      if (n < p + 1) fail("n < p + 1");
      if (!(sd_h > 0.0) || !(sd_d > 0.0)) fail("non-positive standard deviation");
      if (null_h.size() != s_reps) fail("null_h length does not match s_reps");
    } else {
      if (p != 1) fail("univariate calibration needs p == 1");
      if (!null_h.empty()) fail("univariate calibration carries H samples");
    }
  }
};

namespace detail {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and SD with divisor S - 1, reduced in index order.
inline MeanSd mean_sd(std::span<const double> xs) {
  const double mean = compensated_sum(xs) / static_cast<double>(xs.size());
  CompensatedSum ss;
  for (double x : xs) ss.add((x - mean) * (x - mean));
  const double var = xs.size() > 1 ? ss.value() / static_cast<double>(xs.size() - 1) : 0.0;
  return {mean, std::sqrt(var)};
}

/// Fills `out` (n x p) with iid standard normals from `rng`.
inline void draw_standard_normal(Stream& rng, RowMatrix& out) {
  double* d = out.data();
  const Eigen::Index size = out.size();
  for (Eigen::Index k = 0; k < size; ++k) d[k] = rng.normal();
}

}  // namespace detail

inline double studentize(double value, double mean, double sd) { return (value - mean) / sd; }

/// Simulates the null distribution. With kind == kUnivariate (required when
/// p == 1) the univariate statistic is used and no studentization happens.
/// Replication s draws from substream (seed, s), so the result is identical for
/// every thread count.
inline NullCalibration calibrate_null(std::size_t n, std::size_t p, const EvalPointSet& pts, std::size_t s_reps,
                                      std::uint64_t seed, unsigned threads = default_threads()) {
  if (pts.dim() != p) throw InvalidInput("calibrate_null: point set dimension does not match p");
  if (s_reps < 100) throw InvalidInput("calibrate_null: need at least 100 replications");
  const CalibrationKind kind = p == 1 ? CalibrationKind::kUnivariate : CalibrationKind::kMultivariate;
  if (n < 2 || n < p + 1) throw InvalidInput("calibrate_null: need n >= p + 1 and n >= 2");

  std::vector<double> hs(kind == CalibrationKind::kMultivariate ? s_reps : 0);
  std::vector<double> ds(s_reps);
  std::vector<std::uint32_t> redraws(s_reps, 0);
  const std::uint64_t base = tagged_seed(seed, StreamTag::kNullReplication);

  parallel_for(s_reps, threads, [&](std::size_t s) {
    Stream rng(base, s);
    RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (;;) {
      detail::draw_standard_normal(rng, x);
      try {
        const Standardization st = scaled_residuals(x);
        if (kind == CalibrationKind::kMultivariate) {
          const PairStatistics pair = stat_pair(st.residuals, pts);
          hs[s] = pair.h_stat;
          ds[s] = pair.d_stat;
        } else {
          ds[s] = stat_univariate(std::span<const double>(st.residuals.data(), n), pts);
        }
        return;
      } catch (const SingularCovariance&) {
        ++redraws[s];
      }
    }
  });

  NullCalibration cal;
  cal.kind = kind;
  cal.n = n;
  cal.p = p;
  cal.point_set = pts;
  cal.s_reps = s_reps;
  cal.seed = seed;
  for (auto r : redraws) cal.redraws += r;

  const auto d_stats = detail::mean_sd(ds);
  cal.mean_d = d_stats.mean;
  cal.sd_d = d_stats.sd;
  if (kind == CalibrationKind::kMultivariate) {
    const auto h_stats = detail::mean_sd(hs);
    cal.mean_h = h_stats.mean;
    cal.sd_h = h_stats.sd;
    if (!(cal.sd_h > 0.0) || !(cal.sd_d > 0.0)) {
      throw NumericLimit("calibrate_null: simulated statistics have zero spread");
    }
    cal.null_t.resize(s_reps);
    for (std::size_t s = 0; s < s_reps; ++s) {
      cal.null_t[s] = std::max(studentize(hs[s], cal.mean_h, cal.sd_h), studentize(ds[s], cal.mean_d, cal.sd_d));
    }
    std::sort(hs.begin(), hs.end());
    cal.null_h = std::move(hs);
  } else {
    cal.null_t = ds;
  }
  std::sort(ds.begin(), ds.end());
  std::sort(cal.null_t.begin(), cal.null_t.end());
  cal.null_d = std::move(ds);
  return cal;
}

/// max{(H - mean_H)/sd_H, (D - mean_D)/sd_D}.
inline double studentized_T(const PairStatistics& pair, const NullCalibration& cal) {
  if (cal.kind != CalibrationKind::kMultivariate) {
    throw InvalidInput("studentized_T: calibration is univariate");
  }
  if (pair.n != cal.n || pair.point_set_seed != cal.point_set.seed) {
    throw InvalidInput("studentized_T: statistics were not computed for this calibration (n or point set differs)");
  }
  if (!(cal.sd_h > 0.0) || !(cal.sd_d > 0.0)) throw CorruptCalibration("studentized_T: non-positive SD");
  return std::max(studentize(pair.h_stat, cal.mean_h, cal.sd_h), studentize(pair.d_stat, cal.mean_d, cal.sd_d));
}

/// Upper-alpha critical value of a sorted null sample: the order statistic at
/// zero-based index ceil((1 - alpha) S), clamped to the maximum. Rejecting
/// when the statistic is strictly above it agrees with the add-one p-value
/// rule p <= alpha.
inline double critical_value(std::span<const double> sorted_null, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("critical_value: alpha must lie in (0, 1)");
  if (sorted_null.empty()) throw InvalidInput("critical_value: empty null sample");
  const double s = static_cast<double>(sorted_null.size());
  const double k = std::ceil((1.0 - alpha) * s - 1e-9);
  const std::size_t idx = std::min(sorted_null.size() - 1, static_cast<std::size_t>(std::max(0.0, k)));
  return sorted_null[idx];
}

inline double critical_value(const NullCalibration& cal, double alpha) { return critical_value(cal.null_t, alpha); }

/// Add-one Monte Carlo p-value (1 + #{null >= t}) / (S + 1).
inline double upper_p_value(double t_obs, std::span<const double> sorted_null) {
  const auto it = std::lower_bound(sorted_null.begin(), sorted_null.end(), t_obs);
  const auto at_least = static_cast<double>(sorted_null.end() - it);
  return (1.0 + at_least) / (static_cast<double>(sorted_null.size()) + 1.0);
}

/// Add-one p-value for small values: (1 + #{null <= t}) / (S + 1).
inline double lower_p_value(double t_obs, std::span<const double> sorted_null) {
  const auto it = std::upper_bound(sorted_null.begin(), sorted_null.end(), t_obs);
  const auto at_most = static_cast<double>(it - sorted_null.begin());
  return (1.0 + at_most) / (static_cast<double>(sorted_null.size()) + 1.0);
}

/// Two-sided add-one p-value, 2 * min(lower, upper) capped at 1.
inline double two_sided_p_value(double t_obs, std::span<const double> sorted_null) {
  return std::min(1.0, 2.0 * std::min(upper_p_value(t_obs, sorted_null), lower_p_value(t_obs, sorted_null)));
}

inline double p_value(double t_obs, const NullCalibration& cal) { return upper_p_value(t_obs, cal.null_t); }

struct TestComponents {
  double h_stat = 0.0;
  double d_stat = 0.0;
  double studentized_h = 0.0;
  double studentized_d = 0.0;
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  std::optional<TestComponents> components;
  bool degenerate_covariance = false;
};

namespace detail {

inline TestResult degenerate_result(double alpha) {
  TestResult r;
  r.statistic = std::numeric_limits<double>::infinity();
  r.p_value = 0.0;
  r.reject = true;
  r.alpha = alpha;
  r.degenerate_covariance = true;
  return r;
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
}

}  // namespace detail

/// Multivariate test of normality on one sample. A singular sample covariance
/// is reported as a degenerate rejection with p-value 0.
inline TestResult run_test(const SampleMatrix& x, const NullCalibration& cal, double alpha = 0.05,
                           unsigned threads = 1) {
  detail::check_alpha(alpha);
  if (cal.kind != CalibrationKind::kMultivariate) throw InvalidInput("run_test: calibration is univariate");
  if (x.n() != cal.n || x.p() != cal.p) {
    throw InvalidInput("run_test: sample is " + std::to_string(x.n()) + "x" + std::to_string(x.p()) +
                       " but calibration is for " + std::to_string(cal.n) + "x" + std::to_string(cal.p));
  }
  Standardization st;
  try {
    st = scaled_residuals(x);
  } catch (const SingularCovariance&) {
    return detail::degenerate_result(alpha);
  }
  const PairStatistics pair = stat_pair(st.residuals, cal.point_set, threads);
  TestResult r;
  r.alpha = alpha;
  r.statistic = studentized_T(pair, cal);
  r.p_value = p_value(r.statistic, cal);
  r.reject = r.p_value <= alpha;
  r.components = TestComponents{pair.h_stat, pair.d_stat, studentize(pair.h_stat, cal.mean_h, cal.sd_h),
                                studentize(pair.d_stat, cal.mean_d, cal.sd_d)};
  return r;
}

/// Univariate test; the statistic is U itself (no studentization).
inline TestResult run_test_univariate(const Vector& x, const NullCalibration& cal, double alpha = 0.05) {
  detail::check_alpha(alpha);
  if (cal.kind != CalibrationKind::kUnivariate) throw InvalidInput("run_test_univariate: calibration is multivariate");
  if (static_cast<std::size_t>(x.size()) != cal.n) {
    throw InvalidInput("run_test_univariate: sample size " + std::to_string(x.size()) +
                       " does not match calibration n=" + std::to_string(cal.n));
  }
  Standardization st;
  try {
    st = scaled_residuals(SampleMatrix::column(x));
  } catch (const SingularCovariance&) {
    return detail::degenerate_result(alpha);
  }
  TestResult r;
  r.alpha = alpha;
  r.statistic = stat_univariate(std::span<const double>(st.residuals.data(), cal.n), cal.point_set);
  r.p_value = p_value(r.statistic, cal);
  r.reject = r.p_value <= alpha;
  return r;
}

}  // namespace cgfnt
