#include <catch_amalgamated.hpp>

#include <cmath>

#include <boost/math/special_functions/hypergeometric_1F1.hpp>

#include "cgfnt/competitors.hpp"
#include "cgfnt/distributions.hpp"

using namespace cgfnt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

RowMatrix null_residuals(std::size_t n, std::size_t p, std::uint64_t seed) {
  Stream rng(seed);
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  detail::draw_standard_normal(rng, x);
  return scaled_residuals(x).residuals;
}

double gamma_ratio(double p) { return std::exp(std::lgamma((p + 1) / 2) - std::lgamma(p / 2)); }

Matrix random_orthogonal(Eigen::Index p, std::uint64_t seed) {
  Stream rng(seed);
  Matrix g(p, p);
  for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = rng.normal();
  return Eigen::HouseholderQR<Matrix>(g).householderQ();
}

}  // namespace

TEST_CASE("expected norm at the origin") {
  CHECK_THAT(expected_norm_to_std_normal(Vector::Zero(1)), WithinAbs(0.79788456, 1e-8));
  CHECK_THAT(expected_norm_to_std_normal(Vector::Zero(1)), WithinAbs(std::sqrt(2.0 / M_PI), 1e-15));
  CHECK_THAT(expected_norm_to_std_normal(Vector::Zero(3)), WithinAbs(1.59576912, 1e-8));
  CHECK_THAT(expected_norm_to_std_normal(Vector::Zero(3)), WithinAbs(2.0 * std::sqrt(2.0 / M_PI), 1e-15));
}

TEST_CASE("expected norm at (1,1) agrees with ten million draws") {
  Vector a(2);
  a << 1, 1;
  const auto mc = expected_norm_monte_carlo(a, 10'000'000, 3);
  CHECK(std::abs(expected_norm_to_std_normal(a) - mc.mean) < 4.0 * mc.se);
}

TEST_CASE("expected norm series against Monte Carlo on the grid") {
  for (std::size_t p : {1, 2, 3, 5}) {
    for (double r : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      Vector a = Vector::Zero(static_cast<Eigen::Index>(p));
      a(0) = r;
      const auto mc = expected_norm_monte_carlo(a, 1'000'000, 100 * p + static_cast<std::uint64_t>(4 * r));
      INFO("p=" << p << " |a|=" << r);
      CHECK(std::abs(expected_norm_to_std_normal(a) - mc.mean) < 4.0 * mc.se);
    }
  }
}

TEST_CASE("expected norm series against the confluent hypergeometric form") {
  for (std::size_t p : {1, 2, 3, 5, 10}) {
    for (double r : {0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0}) {
      Vector a = Vector::Constant(static_cast<Eigen::Index>(p), r / std::sqrt(double(p)));
      const double ref = std::sqrt(2.0) * gamma_ratio(double(p)) *
                         boost::math::hypergeometric_1F1(-0.5, double(p) / 2.0, -r * r / 2.0);
      INFO("p=" << p << " |a|=" << r);
      CHECK_THAT(expected_norm_to_std_normal(a), WithinRel(ref, 1e-9));
    }
  }
}

TEST_CASE("expected norm depends on a only through its length") {
  Vector a(3), b(3);
  a << 1.2, -0.4, 0.3;
  b << 0.0, std::sqrt(1.44 + 0.16 + 0.09), 0.0;
  CHECK_THAT(expected_norm_to_std_normal(a), WithinRel(expected_norm_to_std_normal(b), 1e-13));
}

TEST_CASE("expected norm series gives up for a far-away point") {
  CHECK_THROWS_AS(expected_norm_to_std_normal(Vector::Constant(2, 30.0)), NumericLimit);
  CHECK_THROWS_AS(expected_norm_to_std_normal(Vector::Constant(2, NAN)), InvalidInput);
}

TEST_CASE("energy statistic falls back to Monte Carlo and says so") {
  RowMatrix z = null_residuals(20, 2, 4);
  z.row(0) << 40.0, 0.0;
  EnergyOptions opts;
  opts.fallback_draws = 20'000;
  const auto r = energy_statistic_detailed(z, opts);
  CHECK(r.fallbacks == 1);
  CHECK(std::isfinite(r.value));
}

TEST_CASE("energy of one point at the origin") {
  for (std::size_t p : {1, 2, 3, 5}) {
    const RowMatrix z = RowMatrix::Zero(1, static_cast<Eigen::Index>(p));
    const double expect = 2.0 * (std::sqrt(2.0) - 1.0) * gamma_ratio(double(p));
    CHECK_THAT(energy_statistic(z), WithinAbs(expect, 1e-13));
  }
}

TEST_CASE("energy is nonnegative on null samples") {
  double lowest = 1e300;
  for (std::uint64_t s = 0; s < 1000; ++s) lowest = std::min(lowest, energy_statistic(null_residuals(20, 3, s)));
  CHECK(lowest >= -1e-8);
}

TEST_CASE("competitors are orthogonally invariant") {
  const RowMatrix z = null_residuals(40, 3, 5);
  const RowMatrix zo = z * random_orthogonal(3, 6).transpose();
  CHECK_THAT(energy_statistic(zo), WithinAbs(energy_statistic(z), 1e-8));
  CHECK_THAT(mardia_skewness(zo), WithinAbs(mardia_skewness(z), 1e-8));
  CHECK_THAT(mardia_kurtosis(zo), WithinAbs(mardia_kurtosis(z), 1e-8));
}

TEST_CASE("energy thread count does not change the value") {
  const RowMatrix z = null_residuals(60, 3, 7);
  EnergyOptions one, four;
  four.threads = 4;
  CHECK(energy_statistic(z, one) == energy_statistic(z, four));
}

TEST_CASE("scaled energy constant is a pure shift") {
  const RowMatrix z = null_residuals(30, 3, 8);
  EnergyOptions scaled;
  scaled.constant = EnergyConstant::kScaledBySqrt2;
  const double shift = 30.0 * (std::sqrt(2.0) - 1.0) * 2.0 * gamma_ratio(3.0);
  CHECK_THAT(energy_statistic(z) - energy_statistic(z, scaled), WithinAbs(shift, 1e-10));
}

TEST_CASE("both energy constants give the same decisions after calibration") {
  const auto plain = calibrate_competitors(20, 2, 500, 9, 1, EnergyConstant::kStandard);
  const auto scaled = calibrate_competitors(20, 2, 500, 9, 1, EnergyConstant::kScaledBySqrt2);
  // visible difference in the null location
  CHECK(plain.null_energy.front() - scaled.null_energy.front() > 1.0);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const RowMatrix z = sample(ProductMarginal{marginal::Laplace{}, 2}, 20, s).data();
    const RowMatrix r = scaled_residuals(z).residuals;
    const auto a = competitor_p_values(competitor_values(r, EnergyConstant::kStandard), plain);
    const auto b = competitor_p_values(competitor_values(r, EnergyConstant::kScaledBySqrt2), scaled);
    CHECK(a.energy == b.energy);
  }
}

TEST_CASE("Mardia skewness of a symmetric set is zero") {
  RowMatrix z(4, 2);
  z << 1.0, 0.5, -1.0, -0.5, 0.3, -2.0, -0.3, 2.0;
  CHECK_THAT(mardia_skewness(z), WithinAbs(0.0, 1e-15));
}

TEST_CASE("Mardia kurtosis of unit-norm rows is one") {
  RowMatrix z(3, 2);
  z << 1.0, 0.0, 0.6, 0.8, 0.0, -1.0;
  CHECK_THAT(mardia_kurtosis(z), WithinAbs(1.0, 1e-15));
}

TEST_CASE("Mardia skewness under row permutation and sign flip") {
  const RowMatrix z = null_residuals(25, 3, 10);
  const RowMatrix flipped = -z;
  CHECK(mardia_skewness(flipped) == mardia_skewness(z));
  RowMatrix rev = z.colwise().reverse();
  CHECK_THAT(mardia_skewness(rev), WithinRel(mardia_skewness(z), 1e-14));
  CHECK(mardia_skewness(z) >= 0.0);
}

TEST_CASE("Mardia kurtosis null mean") {
  // independent oracle: 1e5 brute-force replications
  constexpr std::size_t reps = 100'000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t s = 0; s < reps; ++s) {
    const RowMatrix z = null_residuals(50, 3, 1'000'000 + s);
    double b2 = 0.0;
    for (Eigen::Index i = 0; i < 50; ++i) b2 += std::pow(z.row(i).squaredNorm(), 2);
    b2 /= 50.0;
    sum += b2;
    sum2 += b2 * b2;
  }
  const double oracle = sum / reps;
  const double oracle_se = std::sqrt((sum2 / reps - oracle * oracle) / reps);
  const double exact = 3.0 * 5.0 * 49.0 / 51.0;
  CHECK(std::abs(oracle - exact) < 3.0 * oracle_se);

  const auto cal = calibrate_competitors(50, 3, 10'000, 11, default_threads());
  double m = 0.0, m2 = 0.0;
  for (double v : cal.null_kurt) {
    m += v;
    m2 += v * v;
  }
  m /= cal.null_kurt.size();
  const double se = std::sqrt((m2 / cal.null_kurt.size() - m * m) / cal.null_kurt.size());
  CHECK(std::abs(m - oracle) < 3.0 * std::hypot(se, oracle_se));
}

TEST_CASE("competitor calibration is sorted and reproducible") {
  const auto a = calibrate_competitors(20, 2, 300, 12, 1);
  const auto b = calibrate_competitors(20, 2, 300, 12, 3);
  CHECK(std::is_sorted(a.null_energy.begin(), a.null_energy.end()));
  CHECK(std::is_sorted(a.null_kurt.begin(), a.null_kurt.end()));
  CHECK(a.null_energy == b.null_energy);
  CHECK(a.null_skew == b.null_skew);
  CHECK(a.null_kurt == b.null_kurt);
  CHECK_THROWS_AS(calibrate_competitors(2, 2, 300, 1, 1), InvalidInput);
}
