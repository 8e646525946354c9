#pragma once

// Empirical rejection rates of the CGF tests and the competitors under a
// given law.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgfnt/calibration.hpp"
#include "cgfnt/competitors.hpp"
#include "cgfnt/distributions.hpp"
#include "cgfnt/ecgf.hpp"
#include "cgfnt/error.hpp"
#include "cgfnt/parallel.hpp"
#include "cgfnt/rng.hpp"

namespace cgfnt {

enum class TestKind { kT, kH, kD, kU, kEnergy, kMardiaSkew, kMardiaKurt };

inline const char* to_string(TestKind k) {
  switch (k) {
    case TestKind::kT: return "T";
    case TestKind::kH: return "H";
    case TestKind::kD: return "D";
    case TestKind::kU: return "U";
    case TestKind::kEnergy: return "EN";
    case TestKind::kMardiaSkew: return "MS";
    case TestKind::kMardiaKurt: return "MK";
  }
  return "?";
}

inline TestKind parse_test_kind(const std::string& s) {
  for (TestKind k : {TestKind::kT, TestKind::kH, TestKind::kD, TestKind::kU, TestKind::kEnergy,
                     TestKind::kMardiaSkew, TestKind::kMardiaKurt}) {
    if (s == to_string(k)) return k;
  }
  throw InvalidInput("unknown test '" + s + "' (expected T, H, D, U, EN, MS or MK)");
}

inline bool needs_competitor_calibration(TestKind k) {
  return k == TestKind::kEnergy || k == TestKind::kMardiaSkew || k == TestKind::kMardiaKurt;
}

struct PowerStudyConfig {
  DistributionSpec spec;
  std::size_t n = 50;
  std::size_t replications = 2000;
  double alpha = 0.05;
  /// Calibration cell: radius R, point count N, null replications S, seed.
  double radius = 3.0;
  std::size_t n_points = 500;
  std::size_t s_reps = 10'000;
  std::uint64_t calibration_seed = 1;
  std::vector<TestKind> tests;
  std::uint64_t master_seed = 1;
  unsigned threads = default_threads();
};

struct TestRejection {
  TestKind test = TestKind::kT;
  double proportion = 0.0;
  double se = 0.0;
};

struct PowerStudyResult {
  std::vector<TestRejection> rejections;
  double wall_seconds = 0.0;
  std::size_t replications = 0;
  std::size_t degenerate = 0;
  std::size_t energy_fallbacks = 0;

  const TestRejection& at(TestKind k) const {
    for (const auto& r : rejections) {
      if (r.test == k) return r;
    }
    throw InvalidInput(std::string("test ") + to_string(k) + " was not part of the study");
  }
};

inline void validate(const PowerStudyConfig& cfg) {
  if (cfg.replications < 100) throw InvalidInput("power study: need at least 100 replications");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InvalidInput("power study: alpha must lie in (0, 1)");
  if (cfg.tests.empty()) throw InvalidInput("power study: no tests requested");
  const std::size_t p = dimension(cfg.spec);
  for (TestKind k : cfg.tests) {
    const bool univariate_only = k == TestKind::kU;
    const bool multivariate_only = k == TestKind::kT || k == TestKind::kH || k == TestKind::kD;
    if (univariate_only && p != 1) throw InvalidInput("power study: U needs p = 1");
    if (multivariate_only && p < 2) throw InvalidInput(std::string("power study: ") + to_string(k) + " needs p >= 2");
  }
  if (cfg.n < p + 1 || cfg.n < 2) throw InvalidInput("power study: need n >= p + 1");
  validate(cfg.spec);
}

/// Default test list for a dimension.
inline std::vector<TestKind> default_tests(std::size_t p) {
  if (p == 1) return {TestKind::kU, TestKind::kEnergy, TestKind::kMardiaSkew, TestKind::kMardiaKurt};
  return {TestKind::kT,      TestKind::kH,          TestKind::kD,
          TestKind::kEnergy, TestKind::kMardiaSkew, TestKind::kMardiaKurt};
}

/// Runs the study against precomputed calibrations. `competitors` may be null
/// when no competitor test is requested. Replication r draws its sample with
/// seed substream (master_seed, r), so results do not depend on threads.
inline PowerStudyResult power_study(const PowerStudyConfig& cfg, const NullCalibration& cal,
                                    const CompetitorCalibration* competitors) {
  validate(cfg);
  const std::size_t p = dimension(cfg.spec);
  if (cal.n != cfg.n || cal.p != p) throw InvalidInput("power study: calibration does not match (n, p)");
  const bool want_comp = std::any_of(cfg.tests.begin(), cfg.tests.end(), needs_competitor_calibration);
  if (want_comp && (!competitors || competitors->n != cfg.n || competitors->p != p)) {
    throw InvalidInput("power study: competitor calibration missing or mismatched");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t reps = cfg.replications;
  const std::size_t k_tests = cfg.tests.size();
  std::vector<unsigned char> reject(reps * k_tests, 0);
  std::vector<unsigned char> degenerate(reps, 0);
  std::vector<std::uint32_t> fallbacks(reps, 0);
  const std::uint64_t base = tagged_seed(cfg.master_seed, StreamTag::kPowerReplication);

  parallel_for(reps, cfg.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = substream_seed(base, r);
    const SampleMatrix x = sample(cfg.spec, cfg.n, rep_seed);
    Standardization st;
    try {
      st = scaled_residuals(x);
    } catch (const SingularCovariance&) {
      degenerate[r] = 1;
      for (std::size_t k = 0; k < k_tests; ++k) reject[r * k_tests + k] = 1;
      return;
    }
    std::optional<PairStatistics> pair;
    double u = 0.0;
    std::optional<CompetitorValues> comp;
    for (std::size_t k = 0; k < k_tests; ++k) {
      const TestKind kind = cfg.tests[k];
      double pv = 1.0;
      switch (kind) {
        case TestKind::kT:
        case TestKind::kH:
        case TestKind::kD:
          if (!pair) pair = stat_pair(st.residuals, cal.point_set);
          if (kind == TestKind::kT) pv = upper_p_value(studentized_T(*pair, cal), cal.null_t);
          if (kind == TestKind::kH) pv = upper_p_value(pair->h_stat, cal.null_h);
          if (kind == TestKind::kD) pv = upper_p_value(pair->d_stat, cal.null_d);
          break;
        case TestKind::kU:
          u = stat_univariate(std::span<const double>(st.residuals.data(), cfg.n), cal.point_set);
          pv = upper_p_value(u, cal.null_t);
          break;
        case TestKind::kEnergy:
        case TestKind::kMardiaSkew:
        case TestKind::kMardiaKurt: {
          if (!comp) {
            comp = competitor_values(st.residuals, competitors->energy_constant, rep_seed);
            fallbacks[r] = static_cast<std::uint32_t>(comp->energy_fallbacks);
          }
          const auto pvs = competitor_p_values(*comp, *competitors);
          pv = kind == TestKind::kEnergy ? pvs.energy : kind == TestKind::kMardiaSkew ? pvs.skew : pvs.kurt;
          break;
        }
      }
      reject[r * k_tests + k] = pv <= cfg.alpha ? 1 : 0;
    }
  });

  PowerStudyResult res;
  res.replications = reps;
  for (std::size_t k = 0; k < k_tests; ++k) {
    std::size_t count = 0;
    for (std::size_t r = 0; r < reps; ++r) count += reject[r * k_tests + k];
    const double ph = static_cast<double>(count) / static_cast<double>(reps);
    res.rejections.push_back({cfg.tests[k], ph, std::sqrt(ph * (1.0 - ph) / static_cast<double>(reps))});
  }
  for (std::size_t r = 0; r < reps; ++r) {
    res.degenerate += degenerate[r];
    res.energy_fallbacks += fallbacks[r];
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Calibration for a study's cell: points from (p, N, R, seed), then S null
/// replications with the same seed.
inline NullCalibration calibrate_for(const PowerStudyConfig& cfg) {
  const std::size_t p = dimension(cfg.spec);
  const auto pts = sample_ball_points(p, cfg.n_points, cfg.radius, cfg.calibration_seed);
  return calibrate_null(cfg.n, p, pts, cfg.s_reps, cfg.calibration_seed, cfg.threads);
}

/// Builds whatever calibrations the config needs and runs the study.
inline PowerStudyResult power_study(const PowerStudyConfig& cfg) {
  validate(cfg);
  const NullCalibration cal = calibrate_for(cfg);
  std::optional<CompetitorCalibration> comp;
  if (std::any_of(cfg.tests.begin(), cfg.tests.end(), needs_competitor_calibration)) {
    comp = calibrate_competitors(cfg.n, dimension(cfg.spec), cfg.s_reps, cfg.calibration_seed, cfg.threads);
  }
  return power_study(cfg, cal, comp ? &*comp : nullptr);
}

}  // namespace cgfnt
