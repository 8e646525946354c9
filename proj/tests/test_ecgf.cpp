#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cgfnt/ecgf.hpp"
#include "cgfnt/rng.hpp"
#include "cgfnt/standardize.hpp"
#include "cgfnt/verify.hpp"

using namespace cgfnt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

RowMatrix random_rows(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Stream rng(seed);
  RowMatrix x(n, p);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal();
  return x;
}

// H_L(t) rebuilt from the raw sums in (M H_M - grad grad^T) / M^2 form.
Matrix hess_lambda_from_sums(const RowMatrix& z, const Vector& t) {
  const auto p = z.cols();
  double m = 0.0;
  Vector g = Vector::Zero(p);
  Matrix h = Matrix::Zero(p, p);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Vector zi = z.row(i).transpose();
    const double e = std::exp(t.dot(zi));
    m += e;
    g += zi * e;
    h += zi * zi.transpose() * e;
  }
  const double n = static_cast<double>(z.rows());
  m /= n;
  g /= n;
  h /= n;
  return (m * h - g * g.transpose()) / (m * m);
}

}  // namespace

TEST_CASE("sample_ball_points stay in the ball and are reproducible") {
  const auto pts = sample_ball_points(3, 500, 3.0, 42);
  CHECK(pts.size() == 500);
  CHECK(pts.dim() == 3);
  CHECK(pts.points.rowwise().norm().maxCoeff() <= 3.0);
  CHECK(sample_ball_points(3, 500, 3.0, 42) == pts);
  CHECK_FALSE(sample_ball_points(3, 500, 3.0, 43) == pts);
}

TEST_CASE("sample_ball_points in one dimension") {
  const auto pts = sample_ball_points(1, 10, 0.5, 0);
  CHECK(pts.points.cwiseAbs().maxCoeff() <= 0.5);
}

TEST_CASE("ball points have mean zero") {
  const auto pts = sample_ball_points(2, 100'000, 1.0, 9);
  // each coordinate of a uniform point in the unit disc has variance 1/4
  const double bound = 4.0 * std::sqrt(0.25 / 100'000.0);
  const Vector mean = pts.points.colwise().mean().transpose();
  CHECK(std::abs(mean(0)) < bound);
  CHECK(std::abs(mean(1)) < bound);
  // uniform in the disc: E|t|^2 = R^2 p / (p + 2)
  CHECK_THAT(pts.points.rowwise().squaredNorm().mean(), WithinAbs(0.5, 0.005));
}

TEST_CASE("sample_ball_points rejects bad arguments") {
  CHECK_THROWS_AS(sample_ball_points(2, 0, 1.0, 1), InvalidInput);
  CHECK_THROWS_AS(sample_ball_points(2, 5, 0.0, 1), InvalidInput);
}

TEST_CASE("ecgf_eval at the origin") {
  const RowMatrix x = random_rows(25, 3, 2);
  const auto e = ecgf_eval(x, Vector::Zero(3));
  CHECK(e.m == 1.0);
  CHECK((e.grad - x.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-14);
  const Matrix cov = sample_cov_biased(x);
  CHECK((e.hess_lambda - cov).cwiseAbs().maxCoeff() < 1e-12);

  const auto z = scaled_residuals(x).residuals;
  const auto ez = ecgf_eval(z, Vector::Zero(3));
  CHECK((ez.hess_lambda - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(ez.grad.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ecgf_eval of a single row has zero CGF Hessian") {
  RowMatrix z(1, 2);
  z << 0.3, -1.2;
  Vector t(2);
  t << 0.7, 2.0;
  CHECK(ecgf_eval(z, t).hess_lambda.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("ecgf_eval matches central differences of log M") {
  const RowMatrix z = random_rows(20, 3, 5);
  Vector t(3);
  t << 0.4, -0.2, 0.6;
  const Matrix fd = central_difference_hessian([&](const Vector& u) { return log_mgf(z, u); }, t, 1e-4);
  CHECK((ecgf_eval(z, t).hess_lambda - fd).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ecgf_eval agrees with the raw-sum formula") {
  const RowMatrix z = random_rows(30, 3, 6);
  Vector t(3);
  t << 0.5, 0.1, -0.9;
  const auto e = ecgf_eval(z, t);
  CHECK((e.hess_lambda - hess_lambda_from_sums(z, t)).cwiseAbs().maxCoeff() < 1e-12);
  // H_M and grad recombine to the same H_L
  const Matrix again = (e.m * e.hess_m - e.grad * e.grad.transpose()) / (e.m * e.m);
  CHECK((again - e.hess_lambda).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ecgf_eval survives exponents near the overflow edge") {
  RowMatrix z(3, 1);
  z << 300.0, 301.0, 299.0;
  Vector t(1);
  t << 3.0;
  const auto e = ecgf_eval(z, t);
  CHECK(std::isfinite(e.log_m));
  CHECK(std::isfinite(e.hess_lambda(0, 0)));
  CHECK(e.hess_lambda(0, 0) > 0.0);
}

TEST_CASE("marginal_cgf_second at zero is the biased variance") {
  const RowMatrix x = random_rows(17, 1, 8);
  const Vector col = x.col(0);
  const double var = (col.array() - col.mean()).square().mean();
  CHECK_THAT(marginal_cgf_second(col, 0.0), WithinAbs(var, 1e-13));
}

TEST_CASE("marginal_cgf_second of a constant column is zero") {
  CHECK(marginal_cgf_second(Vector::Constant(9, 1.5), 0.8) == 0.0);
}

TEST_CASE("marginal_cgf_second equals the diagonal of the full Hessian at the axis point") {
  const RowMatrix z = random_rows(40, 3, 10);
  for (Eigen::Index j = 0; j < 3; ++j) {
    Vector s = Vector::Zero(3);
    s(j) = 0.75;
    const double full = ecgf_eval(z, s).hess_lambda(j, j);
    CHECK_THAT(marginal_cgf_second(Vector(z.col(j)), 0.75), WithinAbs(full, 1e-12));
  }
}

TEST_CASE("stat_pair on the origin-only point set is zero") {
  const auto z = scaled_residuals(random_rows(30, 3, 12)).residuals;
  const auto pts = EvalPointSet::from_points(RowMatrix::Zero(1, 3));
  const auto s = stat_pair(z, pts);
  CHECK(s.h_stat < 1e-18);
  CHECK(s.d_stat < 1e-18);
}

TEST_CASE("stat_pair has no dependence part when p = 1") {
  const auto z = scaled_residuals(random_rows(30, 1, 13)).residuals;
  const auto s = stat_pair(z, sample_ball_points(1, 20, 3.0, 1));
  CHECK(s.h_stat == 0.0);
  CHECK(s.d_stat > 0.0);
}

TEST_CASE("stat_pair matches a definition-level oracle") {
  const auto z = scaled_residuals(random_rows(5, 2, 9)).residuals;
  const auto pts = sample_ball_points(2, 3, 3.0, 9);
  double h = 0.0, d = 0.0;
  for (Eigen::Index l = 0; l < 3; ++l) {
    const Vector t = pts.points.row(l).transpose();
    const Matrix hl = hess_lambda_from_sums(z, t);
    h += hl(0, 1) * hl(0, 1);
    for (Eigen::Index j = 0; j < 2; ++j) {
      Vector s = Vector::Zero(2);
      s(j) = t(j);
      const double djj = hess_lambda_from_sums(z, s)(j, j);
      d += (djj - 1.0) * (djj - 1.0);
    }
  }
  const auto s = stat_pair(z, pts);
  CHECK_THAT(s.h_stat, WithinRel(5.0 * h, 1e-10));
  CHECK_THAT(s.d_stat, WithinRel(5.0 * d, 1e-10));
}

TEST_CASE("stat_pair rejects a dimension mismatch") {
  const auto z = random_rows(10, 3, 1);
  CHECK_THROWS_AS(stat_pair(z, sample_ball_points(2, 5, 1.0, 1)), InvalidInput);
}

TEST_CASE("stat_univariate on the origin is zero") {
  const auto z = scaled_residuals(random_rows(12, 1, 3)).residuals;
  const auto pts = EvalPointSet::from_points(RowMatrix::Zero(1, 1));
  CHECK(stat_univariate(Vector(z.col(0)), pts) < 1e-25);
}

TEST_CASE("stat_univariate two-point closed form") {
  Vector z(2);
  z << -1.0, 1.0;
  RowMatrix pts(4, 1);
  pts << 0.3, 0.3, -0.3, 0.3;
  const double th = std::tanh(0.3);
  CHECK_THAT(marginal_cgf_second(z, 0.3), WithinAbs(1.0 - th * th, 1e-15));
  const double expect = 2.0 * std::pow(th * th, 2) * 4.0;
  CHECK_THAT(stat_univariate(z, EvalPointSet::from_points(pts)), WithinRel(expect, 1e-12));
}

TEST_CASE("stat_pair does not depend on the thread count") {
  const auto z = scaled_residuals(random_rows(50, 3, 21)).residuals;
  const auto pts = sample_ball_points(3, 200, 3.0, 4);
  const auto a = stat_pair(z, pts, 1);
  const auto b = stat_pair(z, pts, 4);
  CHECK(a.h_stat == b.h_stat);
  CHECK(a.d_stat == b.d_stat);
}

TEST_CASE("compensated_sum recovers cancelled digits") {
  const std::vector<double> xs{1e16, 1.0, -1e16, 1.0};
  CHECK(compensated_sum(xs) == 2.0);
}
