#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cgfnt/cgfnt.hpp"

using namespace cgfnt;

namespace {

RowMatrix normal_sample(std::size_t n, std::size_t p, std::uint64_t seed) {
  Stream rng(seed);
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  detail::draw_standard_normal(rng, x);
  return x;
}

Matrix random_matrix(Eigen::Index p, std::uint64_t seed) {
  Stream rng(seed);
  Matrix a(p, p);
  for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = rng.normal();
  return a;
}

const NullCalibration& cal_20_2() {
  static const NullCalibration cal = calibrate_null(20, 2, sample_ball_points(2, 60, 3.0, 4), 2000, 4, 1);
  return cal;
}

}  // namespace

TEST_CASE("statistics ignore translation, row order and positive scaling") {
  const auto pts = sample_ball_points(3, 40, 3.0, 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RowMatrix x = normal_sample(25, 3, seed);
    const auto base = stat_pair(scaled_residuals(x), pts);

    RowMatrix shifted = x;
    shifted.rowwise() += Eigen::RowVector3d(4.0, -2.5, 0.75);
    const auto s = stat_pair(scaled_residuals(shifted), pts);
    CHECK(std::abs(s.h_stat - base.h_stat) <= 1e-9 * std::max(1.0, base.h_stat));
    CHECK(std::abs(s.d_stat - base.d_stat) <= 1e-9 * std::max(1.0, base.d_stat));

    std::vector<Eigen::Index> order(25);
    std::iota(order.begin(), order.end(), 0);
    std::reverse(order.begin(), order.end());
    std::rotate(order.begin(), order.begin() + 7, order.end());
    RowMatrix perm(25, 3);
    for (Eigen::Index i = 0; i < 25; ++i) perm.row(i) = x.row(order[static_cast<std::size_t>(i)]);
    const auto q = stat_pair(scaled_residuals(perm), pts);
    CHECK(std::abs(q.h_stat - base.h_stat) <= 1e-9 * std::max(1.0, base.h_stat));
    CHECK(std::abs(q.d_stat - base.d_stat) <= 1e-9 * std::max(1.0, base.d_stat));

    const auto c = stat_pair(scaled_residuals(RowMatrix(3.7 * x)), pts);
    CHECK(std::abs(c.h_stat - base.h_stat) <= 1e-9 * std::max(1.0, base.h_stat));
  }
}

TEST_CASE("univariate statistic ignores location and scale") {
  const auto pts = sample_ball_points(1, 30, 3.0, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Vector x = normal_sample(30, 1, 100 + seed).col(0);
    const double u = stat_univariate(scaled_residuals(SampleMatrix::column(x)).residuals.col(0).eval(), pts);
    const Vector z = (0.01 * x).array() - 3.0;
    const double w = stat_univariate(scaled_residuals(SampleMatrix::column(z)).residuals.col(0).eval(), pts);
    CHECK(std::abs(w - u) <= 1e-8 * std::max(1.0, u));
  }
}

TEST_CASE("residuals are affine equivariant up to rotation") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RowMatrix x = normal_sample(40, 3, 200 + seed);
    const Matrix a = random_matrix(3, 300 + seed);
    RowMatrix y = x * a.transpose();
    y.rowwise() += Eigen::RowVector3d(1.0, 2.0, 3.0);
    const RowMatrix zx = scaled_residuals(x).residuals;
    const RowMatrix zy = scaled_residuals(y).residuals;
    // zy = zx * Q^T for an orthogonal Q; recover Q by least squares
    const Matrix qt = zx.colPivHouseholderQr().solve(Matrix(zy));
    CHECK((qt.transpose() * qt - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((zx * qt - zy).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("sym_inv_sqrt eigenvalues are reciprocal square roots") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix b = random_matrix(4, 400 + seed);
    const Matrix s = b * b.transpose() + 0.1 * Matrix::Identity(4, 4);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    const Eigen::SelfAdjointEigenSolver<Matrix> ei(sym_inv_sqrt(s));
    Vector expect = es.eigenvalues().array().rsqrt();
    std::sort(expect.data(), expect.data() + expect.size());
    Vector got = ei.eigenvalues();
    std::sort(got.data(), got.data() + got.size());
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-10 * expect.maxCoeff());
    const Matrix w = sym_inv_sqrt(s);
    CHECK((w - w.transpose()).cwiseAbs().maxCoeff() < 1e-12 * w.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("empirical CGF Hessian is symmetric positive semidefinite") {
  Stream rng(5);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RowMatrix z = scaled_residuals(normal_sample(30, 3, 500 + seed)).residuals;
    Vector t(3);
    for (Eigen::Index j = 0; j < 3; ++j) t(j) = 3.0 * (rng.uniform() - 0.5);
    const auto e = ecgf_eval(z, t);
    CHECK((e.hess_lambda - e.hess_lambda.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(e.hess_lambda);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("large shifts leave the statistic finite and unchanged") {
  const auto pts = sample_ball_points(2, 40, 3.0, 6);
  const RowMatrix x = normal_sample(30, 2, 6);
  const auto base = stat_pair(scaled_residuals(x), pts);
  RowMatrix far = x;
  far.array() += 500.0;
  const auto s = stat_pair(scaled_residuals(far), pts);
  CHECK(std::isfinite(s.h_stat));
  CHECK(std::abs(s.h_stat - base.h_stat) <= 1e-6 * std::max(1.0, base.h_stat));
  CHECK(std::abs(s.d_stat - base.d_stat) <= 1e-6 * std::max(1.0, base.d_stat));
}

TEST_CASE("T is exactly translation invariant through run_test") {
  const auto& cal = cal_20_2();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RowMatrix x = normal_sample(20, 2, 600 + seed);
    RowMatrix y = x;
    y.rowwise() += Eigen::RowVector2d(1e-3, -7.0);
    const auto a = run_test(SampleMatrix(x), cal);
    const auto b = run_test(SampleMatrix(y), cal);
    CHECK(std::abs(a.statistic - b.statistic) <= 1e-9 * std::max(1.0, std::abs(a.statistic)));
    CHECK(a.p_value == b.p_value);
  }
}

TEST_CASE("p-value is monotone non-increasing in the statistic") {
  const auto& null = cal_20_2().null_t;
  double prev = 1.0;
  for (double t = null.front() - 1.0; t <= null.back() + 1.0; t += 0.01) {
    const double p = upper_p_value(t, null);
    CHECK(p <= prev);
    CHECK(p > 0.0);
    prev = p;
  }
}

TEST_CASE("results do not depend on the thread count") {
  const auto pts = sample_ball_points(3, 50, 3.0, 7);
  const auto a = calibrate_null(20, 3, pts, 300, 7, 1);
  const auto b = calibrate_null(20, 3, pts, 300, 7, 4);
  CHECK(a.null_t == b.null_t);
  CHECK(a.null_d == b.null_d);
  const RowMatrix z = scaled_residuals(normal_sample(20, 3, 8)).residuals;
  const auto s1 = stat_pair(z, pts, 1);
  const auto s4 = stat_pair(z, pts, 4);
  CHECK(s1.h_stat == s4.h_stat);
  CHECK(s1.d_stat == s4.d_stat);

  PowerStudyConfig cfg;
  cfg.spec = ProductMarginal{marginal::Laplace{}, 2};
  cfg.n = 20;
  cfg.replications = 150;
  cfg.tests = {TestKind::kT, TestKind::kH, TestKind::kD};
  cfg.threads = 1;
  const auto r1 = power_study(cfg, cal_20_2(), nullptr);
  cfg.threads = 3;
  const auto r3 = power_study(cfg, cal_20_2(), nullptr);
  for (std::size_t k = 0; k < 3; ++k) CHECK(r1.rejections[k].proportion == r3.rejections[k].proportion);
}

TEST_CASE("level holds under two normal laws") {
  // small-scale version of the null size check: 400 replications, 2000 null draws
  PowerStudyConfig cfg;
  cfg.n = 20;
  cfg.replications = 400;
  cfg.tests = {TestKind::kT};
  cfg.threads = default_threads();
  Matrix s(2, 2);
  s << 4.0, 1.5, 1.5, 1.0;
  for (const DistributionSpec& spec :
       {DistributionSpec{MultivariateNormal{Vector::Zero(2), Matrix::Identity(2, 2)}},
        DistributionSpec{MultivariateNormal{Vector::Constant(2, 3.0), s}}}) {
    cfg.spec = spec;
    const auto r = power_study(cfg, cal_20_2(), nullptr);
    const double rate = r.at(TestKind::kT).proportion;
    // 4 binomial sd around 0.05 at 400 draws
    CHECK(std::abs(rate - 0.05) < 4.0 * std::sqrt(0.05 * 0.95 / 400.0));
  }
}
