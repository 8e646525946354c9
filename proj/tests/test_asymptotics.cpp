#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cgfnt/asymptotics.hpp"

using namespace cgfnt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v(k++) = x;
  return v;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("f2 at the origin is the identity") {
  const auto e = influence_eval(Vector::Zero(3), Vector::Zero(3));
  CHECK(max_abs(e.f2 - Matrix::Identity(3, 3)) < 1e-15);
  CHECK(e.f0 == 0.0);
  CHECK(e.f1.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("influence functions at t = 0") {
  const Vector x = vec({0.3, -1.1});
  const auto e = influence_eval(x, Vector::Zero(2));
  const Matrix a = x * x.transpose() - Matrix::Identity(2, 2);
  CHECK(max_abs(e.g1 - a) < 1e-15);
  CHECK_THAT(e.f1(0), WithinAbs(-x(0), 1e-15));
  CHECK(max_abs(e.f2 + a) < 1e-15);
  // H_L(0) = I exactly on scaled residuals, so nothing is left to linearize
  CHECK(max_abs(e.h) < 1e-15);
}

TEST_CASE("q_matrix structure") {
  const Matrix q = q_matrix(vec({1, 2, 3}), 1);
  Matrix expect(3, 3);
  expect << 0, 1, 0, 1, 4, 3, 0, 3, 0;
  CHECK(q == expect);
  CHECK_THROWS_AS(q_matrix(vec({1, 2}), 2), InvalidInput);
}

TEST_CASE("q_matrix is the derivative of t t^T") {
  const Vector t = vec({0.4, -0.7, 1.3});
  for (Eigen::Index h = 0; h < 3; ++h) {
    Vector up = t, dn = t;
    up(h) += 1e-6;
    dn(h) -= 1e-6;
    const Matrix fd = (up * up.transpose() - dn * dn.transpose()) / 2e-6;
    CHECK(max_abs(fd - q_matrix(t, h)) < 1e-8);
  }
}

TEST_CASE("collapsed f2 matches the term-by-term double sum") {
  Stream rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index p = 1 + rep % 4;
    Vector x(p), t(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      x(j) = rng.normal();
      t(j) = 0.5 * rng.normal();
    }
    const auto e = influence_eval(x, t);
    const Matrix id = Matrix::Identity(p, p);
    const Matrix tt = t * t.transpose();
    const Matrix a = x * x.transpose() - id;
    const Matrix expect = std::exp(0.5 * t.squaredNorm()) *
                          (-0.5 * a * (id + tt) - x * t.transpose() - 0.5 * (id + tt) * a - t * x.transpose() -
                           0.5 * f2_sum_term_direct(x, t) - (id + tt) * t.dot(x));
    CHECK(max_abs(e.f2 - expect) < 1e-12 * std::max(1.0, max_abs(expect)));
  }
}

TEST_CASE("h is the damped sum of g1 and g2") {
  const Vector x = vec({0.2, 0.9, -0.4});
  const Vector t = vec({0.1, -0.3, 0.5});
  const auto e = influence_eval(x, t);
  CHECK(max_abs(e.h - std::exp(-t.squaredNorm()) * (e.g1 + e.g2)) < 1e-15);
  CHECK(max_abs(e.h - e.h.transpose()) < 1e-13);
}

TEST_CASE("influence_eval rejects mismatched input") {
  CHECK_THROWS_AS(influence_eval(Vector::Zero(2), Vector::Zero(3)), InvalidInput);
}

TEST_CASE("influence_components sizes") {
  const auto e = influence_eval(vec({1, 2, 3}), vec({0.1, 0.2, 0.3}));
  CHECK(influence_components(e, InfluenceFunction::kF0).size() == 1);
  CHECK(influence_components(e, InfluenceFunction::kF1).size() == 3);
  CHECK(influence_components(e, InfluenceFunction::kF2).size() == 9);
  CHECK(influence_components(e, InfluenceFunction::kH).size() == 6);
}

TEST_CASE("influence functions have mean zero") {
  for (std::size_t p : {1, 2}) {
    const auto ts = sample_ball_points(p, 2, 1.0, 40 + p);
    for (Eigen::Index l = 0; l < 2; ++l) {
      const auto results = mean_zero_check_all(ts.points.row(l).transpose(), 50'000, 7 + l, 2);
      CHECK(results.size() == 6);
      for (const auto& r : results) {
        INFO(to_string(r.which) << " p=" << p);
        CHECK(r.within(4.0));
      }
    }
  }
}

TEST_CASE("mean-zero tolerance and argument checks") {
  MeanZeroResult r;
  r.mean = {0.3, -0.1};
  r.se = {0.1, 0.1};
  CHECK(r.within(4.0));
  CHECK_FALSE(r.within(2.0));
  CHECK_THROWS_AS(mean_zero_check(InfluenceFunction::kF0, Vector::Zero(2), 100, 1, 1), InvalidInput);
  CHECK_THROWS_AS(mean_zero_check_all(Vector::Constant(2, NAN), 20'000, 1, 1), InvalidInput);
}

TEST_CASE("mean-zero results are thread-count independent") {
  const Vector t = vec({0.3, -0.2});
  const auto a = mean_zero_check(InfluenceFunction::kH, t, 20'000, 5, 1);
  const auto b = mean_zero_check(InfluenceFunction::kH, t, 20'000, 5, 3);
  CHECK(a.mean == b.mean);
  CHECK(a.se == b.se);
}

TEST_CASE("linearization residual is small at the origin") {
  Stream rng(2);
  RowMatrix x(200, 2);
  detail::draw_standard_normal(rng, x);
  CHECK(linearization_residual_once(x, Vector::Zero(2)) < 1e-10);
}

TEST_CASE("linearization residual shrinks with n") {
  const std::vector<std::size_t> grid{100, 1000, 10000};
  const Vector t = vec({0.5 / std::sqrt(2.0), 0.5 / std::sqrt(2.0)});
  const auto r = linearization_residual(grid, t, 50, 1, 2);
  CHECK(r.residual_norms.size() == 3);
  CHECK(r.strictly_decreasing());
  CHECK(r.slope < 0.0);
}

TEST_CASE("linearization_residual argument checks") {
  const std::vector<std::size_t> bad{1000, 100};
  CHECK_THROWS_AS(linearization_residual(bad, vec({0.1, 0.1}), 5, 1, 1), InvalidInput);
  const std::vector<std::size_t> ok{100};
  CHECK_THROWS_AS(linearization_residual(ok, vec({1.0, 1.0}), 5, 1, 1), InvalidInput);
}

TEST_CASE("standardized CGF second derivatives") {
  CHECK(standardized_cgf_second(marginal::Normal{}, 0.7) == 1.0);
  CHECK_THAT(standardized_cgf_second(marginal::Exponential{1}, 0.0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(standardized_cgf_second(marginal::Exponential{1}, 0.4), WithinAbs(1.0 / 0.36, 1e-14));
  CHECK_THAT(standardized_cgf_second(marginal::Uniform{0, 1}, 0.0), WithinAbs(1.0, 1e-14));
  CHECK_THAT(standardized_cgf_second(marginal::Gamma{4, 5}, 0.0), WithinAbs(1.0, 1e-15));
  CHECK_THROWS_AS(standardized_cgf_second(marginal::Exponential{1}, 1.0), InvalidInput);
  CHECK_THROWS_AS(standardized_cgf_second(marginal::Laplace{}, 0.1), InvalidInput);
}

TEST_CASE("uniform CGF branch is continuous and matches differences") {
  auto cgf = [](double s) { return std::log(std::sinh(0.5 * s) / (0.5 * s)); };
  for (double s : {0.5, 1.0, 2.0, 4.0}) {
    const double h = 1e-4;
    const double fd = (cgf(s + h) - 2.0 * cgf(s) + cgf(s - h)) / (h * h);
    CHECK_THAT(detail::uniform_centered_cgf_second(s), WithinAbs(fd, 1e-6));
  }
  const double below = detail::uniform_centered_cgf_second(0.0099999);
  const double above = detail::uniform_centered_cgf_second(0.0100001);
  CHECK_THAT(below, WithinAbs(above, 1e-9));
}

TEST_CASE("exponential consistency limit") {
  const auto pts = sample_ball_points(1, 50, 0.4, 3);
  // at n = 1e5 the error is dominated by noise from points near 0.4 (typical
  // size 0.05 to 0.15), so the limit itself is checked at a larger n
  const auto r = consistency_limit_check(marginal::Exponential{1}, pts, 4'000'000, 3);
  CHECK(r.analytic > 0.0);
  CHECK(r.relative_error() < 0.05);
}

TEST_CASE("normal consistency limit is zero") {
  const auto pts = sample_ball_points(1, 50, 1.0, 5);
  const auto a = consistency_limit_check(marginal::Normal{}, pts, 10'000, 5);
  const auto b = consistency_limit_check(marginal::Normal{}, pts, 1'000'000, 5);
  CHECK(a.analytic == 0.0);
  CHECK(b.empirical < a.empirical);
  CHECK(b.empirical < 1e-3);
}

TEST_CASE("uniform consistency limit") {
  const auto pts = sample_ball_points(1, 50, 1.0, 4);
  const auto r = consistency_limit_check(marginal::Uniform{0, 1}, pts, 100'000, 4);
  CHECK(r.relative_error() < 0.05);
}

TEST_CASE("multivariate H over n shrinks") {
  const auto pts = sample_ball_points(3, 50, 1.0, 2);
  const std::vector<std::size_t> grid{1000, 10000, 100000};
  const auto v = multivariate_consistency_check(3, 0.5, pts, grid, 2, 2);
  REQUIRE(v.size() == 3);
  CHECK(v[1] < v[0]);
  CHECK(v[2] < v[1]);
}
