#pragma once

// Samplers for the null and alternative laws used in power studies.
//
// Univariate families are sampled by inversion of their quantile function
// (the same function the copula laws use to attach marginals), except the
// normal scale/location mixtures which draw a component label first.
// Exchangeable copulas are drawn with the usual constructions: frailty
// (Laplace-transform) sampling for the Archimedean families and an
// equicorrelated latent vector for the elliptical ones.
//
// Draws are organised in fixed blocks of rows, each with its own substream,
// so a sample depends only on (spec, n, seed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/cauchy.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/exponential.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/laplace.hpp>
#include <boost/math/distributions/logistic.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/pareto.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/distributions/weibull.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "cgfnt/error.hpp"
#include "cgfnt/parallel.hpp"
#include "cgfnt/rng.hpp"
#include "cgfnt/standardize.hpp"

namespace cgfnt {

// ---------------------------------------------------------------------------
// Marginal families

namespace marginal {
struct Normal { double mu = 0.0, sigma = 1.0; };
struct Uniform { double a = 0.0, b = 1.0; };
struct Beta { double alpha = 1.0, beta = 1.0; };
/// Generalized lambda, Q(y) = l1 + (y^l3 - (1 - y)^l4) / l2.
struct Gld { double l1 = 0.0, l2 = 1.0, l3 = 1.0, l4 = 1.0; };
/// N(mu, sigma^2) restricted to (a, b).
struct TruncNormal { double a = -1.0, b = 1.0, mu = 0.0, sigma = 1.0; };
struct Laplace { double loc = 0.0, scale = 1.0; };
struct Logistic { double loc = 0.0, scale = 1.0; };
struct Cauchy { double loc = 0.0, scale = 1.0; };
struct StudentT { double df = 1.0; };
struct Exponential { double rate = 1.0; };
struct LogNormal { double mu = 0.0, sigma = 1.0; };
struct Gamma { double shape = 1.0, rate = 1.0; };
struct Weibull { double shape = 1.0, scale = 1.0; };
/// Support [scale, inf), density shape * scale^shape / x^(shape + 1).
struct Pareto { double scale = 1.0, shape = 1.0; };
struct ChiSq { double df = 1.0; };
/// p N(0, b^2) + (1 - p) N(0, 1).
struct ScConN { double p = 0.0, b = 1.0; };
/// p N(a, 1) + (1 - p) N(0, 1).
struct LoConN { double p = 0.0, a = 0.0; };
}  // namespace marginal

using MarginalSpec =
    std::variant<marginal::Normal, marginal::Uniform, marginal::Beta, marginal::Gld, marginal::TruncNormal,
                 marginal::Laplace, marginal::Logistic, marginal::Cauchy, marginal::StudentT, marginal::Exponential,
                 marginal::LogNormal, marginal::Gamma, marginal::Weibull, marginal::Pareto, marginal::ChiSq,
                 marginal::ScConN, marginal::LoConN>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(15);
  os << v;
  return os.str();
}

template <class... Args>
std::string call_form(const char* name, Args... args) {
  std::string out = name;
  out += '(';
  bool first = true;
  ((out += (first ? "" : ","), out += fmt_num(args), first = false), ...);
  out += ')';
  return out;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidInput(what);
}

inline bool finite_all(std::initializer_list<double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

/// Clamp a probability into the open unit interval so quantile functions
/// never see 0 or 1 produced by rounding.
inline double open_unit(double u) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  return std::clamp(u, lo, hi);
}

inline const boost::math::normal_distribution<double>& std_normal() {
  static const boost::math::normal_distribution<double> d;
  return d;
}

inline double phi_cdf(double x) { return boost::math::cdf(std_normal(), x); }
inline double phi_ccdf(double x) { return boost::math::cdf(boost::math::complement(std_normal(), x)); }
inline double phi_quantile(double u) { return boost::math::quantile(std_normal(), u); }

}  // namespace detail

inline std::string to_string(const MarginalSpec& m) {
  using detail::call_form;
  return std::visit(
      overloaded{
          [](const marginal::Normal& d) { return call_form("normal", d.mu, d.sigma); },
          [](const marginal::Uniform& d) { return call_form("uniform", d.a, d.b); },
          [](const marginal::Beta& d) { return call_form("beta", d.alpha, d.beta); },
          [](const marginal::Gld& d) { return call_form("gld", d.l1, d.l2, d.l3, d.l4); },
          [](const marginal::TruncNormal& d) { return call_form("trunc", d.a, d.b, d.mu, d.sigma); },
          [](const marginal::Laplace& d) { return call_form("laplace", d.loc, d.scale); },
          [](const marginal::Logistic& d) { return call_form("logistic", d.loc, d.scale); },
          [](const marginal::Cauchy& d) { return call_form("cauchy", d.loc, d.scale); },
          [](const marginal::StudentT& d) { return call_form("t", d.df); },
          [](const marginal::Exponential& d) { return call_form("exp", d.rate); },
          [](const marginal::LogNormal& d) { return call_form("lognormal", d.mu, d.sigma); },
          [](const marginal::Gamma& d) { return call_form("gamma", d.shape, d.rate); },
          [](const marginal::Weibull& d) { return call_form("weibull", d.shape, d.scale); },
          [](const marginal::Pareto& d) { return call_form("pareto", d.scale, d.shape); },
          [](const marginal::ChiSq& d) { return call_form("chisq", d.df); },
          [](const marginal::ScConN& d) { return call_form("scconn", d.p, d.b); },
          [](const marginal::LoConN& d) { return call_form("loconn", d.p, d.a); },
      },
      m);
}

inline void validate(const MarginalSpec& m) {
  using detail::finite_all;
  using detail::require;
  const std::string name = to_string(m);
  std::visit(overloaded{
                 [&](const marginal::Normal& d) { require(finite_all({d.mu}) && d.sigma > 0 && std::isfinite(d.sigma), name + ": need sigma > 0"); },
                 [&](const marginal::Uniform& d) { require(finite_all({d.a, d.b}) && d.a < d.b, name + ": need a < b"); },
                 [&](const marginal::Beta& d) { require(d.alpha > 0 && d.beta > 0 && finite_all({d.alpha, d.beta}), name + ": shapes must be positive"); },
                 [&](const marginal::Gld& d) {
                   require(finite_all({d.l1, d.l2, d.l3, d.l4}), name + ": non-finite parameter");
                   require(d.l2 != 0.0, name + ": lambda2 must be nonzero");
                 },
                 [&](const marginal::TruncNormal& d) {
                   require(finite_all({d.a, d.b, d.mu, d.sigma}) && d.a < d.b && d.sigma > 0, name + ": need a < b, sigma > 0");
                 },
                 [&](const marginal::Laplace& d) { require(finite_all({d.loc}) && d.scale > 0, name + ": need scale > 0"); },
                 [&](const marginal::Logistic& d) { require(finite_all({d.loc}) && d.scale > 0, name + ": need scale > 0"); },
                 [&](const marginal::Cauchy& d) { require(finite_all({d.loc}) && d.scale > 0, name + ": need scale > 0"); },
                 [&](const marginal::StudentT& d) { require(d.df > 0 && std::isfinite(d.df), name + ": need df > 0"); },
                 [&](const marginal::Exponential& d) { require(d.rate > 0 && std::isfinite(d.rate), name + ": need rate > 0"); },
                 [&](const marginal::LogNormal& d) { require(finite_all({d.mu}) && d.sigma > 0, name + ": need sigma > 0"); },
                 [&](const marginal::Gamma& d) { require(d.shape > 0 && d.rate > 0 && finite_all({d.shape, d.rate}), name + ": need shape, rate > 0"); },
                 [&](const marginal::Weibull& d) { require(d.shape > 0 && d.scale > 0 && finite_all({d.shape, d.scale}), name + ": need shape, scale > 0"); },
                 [&](const marginal::Pareto& d) { require(d.scale > 0 && d.shape > 0 && finite_all({d.scale, d.shape}), name + ": need scale, shape > 0"); },
                 [&](const marginal::ChiSq& d) { require(d.df > 0 && std::isfinite(d.df), name + ": need df > 0"); },
                 [&](const marginal::ScConN& d) { require(d.p >= 0 && d.p <= 1 && d.b > 0 && std::isfinite(d.b), name + ": need 0 <= p <= 1, b > 0"); },
                 [&](const marginal::LoConN& d) { require(d.p >= 0 && d.p <= 1 && std::isfinite(d.a), name + ": need 0 <= p <= 1"); },
             },
             m);
}

/// Percentile function of the generalized lambda distribution.
inline double gld_quantile(double l1, double l2, double l3, double l4, double u) {
  if (l2 == 0.0) throw InvalidInput("gld_quantile: lambda2 must be nonzero");
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidInput("gld_quantile: u must lie in [0, 1]");
  return l1 + (std::pow(u, l3) - std::pow(1.0 - u, l4)) / l2;
}

inline double gld_quantile(const marginal::Gld& g, double u) { return gld_quantile(g.l1, g.l2, g.l3, g.l4, u); }

namespace detail {

/// Quantile of Phi restricted to (alpha, beta) in standard units, computed on
/// whichever side of zero keeps the probabilities away from 1.
inline double trunc_std_normal_quantile(double alpha, double beta, double u) {
  if (alpha > 0.0) return -trunc_std_normal_quantile(-beta, -alpha, 1.0 - u);
  const double lo = phi_cdf(alpha);
  const double hi = phi_cdf(beta);
  const double mass = hi - lo;
  if (!(mass > 1e-12)) throw InvalidInput("truncated normal: interval carries probability below 1e-12");
  const double x = phi_quantile(open_unit(lo + u * mass));
  return std::clamp(x, alpha, beta);
}

inline double trunc_mass(double alpha, double beta) {
  if (alpha > 0.0) return phi_ccdf(alpha) - phi_ccdf(beta);
  return phi_cdf(beta) - phi_cdf(alpha);
}

template <class Cdf>
double invert_monotone(Cdf&& cdf, double u, double lo, double hi) {
  // Expand the bracket until it contains the target.
  while (cdf(lo) > u) lo -= 2.0 * (hi - lo);
  while (cdf(hi) < u) hi += 2.0 * (hi - lo);
  auto f = [&](double x) { return cdf(x) - u; };
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace detail

/// Cumulative distribution function of a marginal family.
inline double marginal_cdf(const MarginalSpec& m, double x) {
  namespace bm = boost::math;
  using detail::phi_cdf;
  return std::visit(
      overloaded{
          [&](const marginal::Normal& d) { return phi_cdf((x - d.mu) / d.sigma); },
          [&](const marginal::Uniform& d) { return std::clamp((x - d.a) / (d.b - d.a), 0.0, 1.0); },
          [&](const marginal::Beta& d) {
            if (x <= 0.0) return 0.0;
            if (x >= 1.0) return 1.0;
            return bm::cdf(bm::beta_distribution<double>(d.alpha, d.beta), x);
          },
          [&](const marginal::Gld& d) {
            const double lo = gld_quantile(d, 0.0);
            const double hi = gld_quantile(d, 1.0);
            if (x <= lo) return 0.0;
            if (x >= hi) return 1.0;
            double a = 0.0, b = 1.0;
            for (int it = 0; it < 200 && b - a > 1e-17; ++it) {
              const double mid = 0.5 * (a + b);
              (gld_quantile(d, mid) < x ? a : b) = mid;
            }
            return 0.5 * (a + b);
          },
          [&](const marginal::TruncNormal& d) {
            if (x <= d.a) return 0.0;
            if (x >= d.b) return 1.0;
            const double alpha = (d.a - d.mu) / d.sigma;
            const double beta = (d.b - d.mu) / d.sigma;
            return detail::trunc_mass(alpha, (x - d.mu) / d.sigma) / detail::trunc_mass(alpha, beta);
          },
          [&](const marginal::Laplace& d) { return bm::cdf(bm::laplace_distribution<double>(d.loc, d.scale), x); },
          [&](const marginal::Logistic& d) { return bm::cdf(bm::logistic_distribution<double>(d.loc, d.scale), x); },
          [&](const marginal::Cauchy& d) { return bm::cdf(bm::cauchy_distribution<double>(d.loc, d.scale), x); },
          [&](const marginal::StudentT& d) { return bm::cdf(bm::students_t_distribution<double>(d.df), x); },
          [&](const marginal::Exponential& d) { return x <= 0.0 ? 0.0 : -std::expm1(-d.rate * x); },
          [&](const marginal::LogNormal& d) {
            return x <= 0.0 ? 0.0 : bm::cdf(bm::lognormal_distribution<double>(d.mu, d.sigma), x);
          },
          [&](const marginal::Gamma& d) {
            return x <= 0.0 ? 0.0 : bm::cdf(bm::gamma_distribution<double>(d.shape, 1.0 / d.rate), x);
          },
          [&](const marginal::Weibull& d) {
            return x <= 0.0 ? 0.0 : bm::cdf(bm::weibull_distribution<double>(d.shape, d.scale), x);
          },
          [&](const marginal::Pareto& d) {
            return x <= d.scale ? 0.0 : bm::cdf(bm::pareto_distribution<double>(d.scale, d.shape), x);
          },
          [&](const marginal::ChiSq& d) {
            return x <= 0.0 ? 0.0 : bm::cdf(bm::chi_squared_distribution<double>(d.df), x);
          },
          [&](const marginal::ScConN& d) { return (1.0 - d.p) * phi_cdf(x) + d.p * phi_cdf(x / d.b); },
          [&](const marginal::LoConN& d) { return (1.0 - d.p) * phi_cdf(x) + d.p * phi_cdf(x - d.a); },
      },
      m);
}

/// Quantile function of a marginal family; u is clamped into (0, 1).
inline double marginal_quantile(const MarginalSpec& m, double u) {
  namespace bm = boost::math;
  u = detail::open_unit(u);
  return std::visit(
      overloaded{
          [&](const marginal::Normal& d) { return d.mu + d.sigma * detail::phi_quantile(u); },
          [&](const marginal::Uniform& d) { return d.a + (d.b - d.a) * u; },
          [&](const marginal::Beta& d) { return bm::quantile(bm::beta_distribution<double>(d.alpha, d.beta), u); },
          [&](const marginal::Gld& d) { return gld_quantile(d, u); },
          [&](const marginal::TruncNormal& d) {
            return d.mu + d.sigma * detail::trunc_std_normal_quantile((d.a - d.mu) / d.sigma, (d.b - d.mu) / d.sigma, u);
          },
          [&](const marginal::Laplace& d) { return bm::quantile(bm::laplace_distribution<double>(d.loc, d.scale), u); },
          [&](const marginal::Logistic& d) { return bm::quantile(bm::logistic_distribution<double>(d.loc, d.scale), u); },
          [&](const marginal::Cauchy& d) { return bm::quantile(bm::cauchy_distribution<double>(d.loc, d.scale), u); },
          [&](const marginal::StudentT& d) { return bm::quantile(bm::students_t_distribution<double>(d.df), u); },
          [&](const marginal::Exponential& d) { return -std::log1p(-u) / d.rate; },
          [&](const marginal::LogNormal& d) { return std::exp(d.mu + d.sigma * detail::phi_quantile(u)); },
          [&](const marginal::Gamma& d) { return bm::gamma_p_inv(d.shape, u) / d.rate; },
          [&](const marginal::Weibull& d) { return d.scale * std::pow(-std::log1p(-u), 1.0 / d.shape); },
          [&](const marginal::Pareto& d) { return d.scale * std::pow(1.0 - u, -1.0 / d.shape); },
          [&](const marginal::ChiSq& d) { return 2.0 * bm::gamma_p_inv(0.5 * d.df, u); },
          [&](const marginal::ScConN& d) {
            const MarginalSpec self = d;
            const double z = detail::phi_quantile(u);
            return detail::invert_monotone([&](double x) { return marginal_cdf(self, x); }, u,
                                           std::min(z, d.b * z) - 1.0, std::max(z, d.b * z) + 1.0);
          },
          [&](const marginal::LoConN& d) {
            const MarginalSpec self = d;
            const double z = detail::phi_quantile(u);
            return detail::invert_monotone([&](double x) { return marginal_cdf(self, x); }, u,
                                           std::min(z, z + d.a) - 1.0, std::max(z, z + d.a) + 1.0);
          },
      },
      m);
}

/// One draw. Mixtures pick a component first; everything else is inverted.
inline double sample_marginal(const MarginalSpec& m, Stream& rng) {
  if (const auto* sc = std::get_if<marginal::ScConN>(&m)) {
    const bool contaminated = rng.uniform() < sc->p;
    const double z = rng.normal();
    return contaminated ? sc->b * z : z;
  }
  if (const auto* lo = std::get_if<marginal::LoConN>(&m)) {
    const bool contaminated = rng.uniform() < lo->p;
    const double z = rng.normal();
    return contaminated ? lo->a + z : z;
  }
  return marginal_quantile(m, rng.uniform());
}

// ---------------------------------------------------------------------------
// Copulas

namespace copula {
struct Clayton { double theta = 1.0; };
struct Gumbel { double theta = 1.0; };
struct Frank { double theta = 1.0; };
struct Amh { double theta = 0.0; };
/// Equicorrelation rho, df degrees of freedom.
struct TCopula { double rho = 0.0, df = 1.0; };
struct Gaussian { double rho = 0.0; };
}  // namespace copula

using CopulaSpec =
    std::variant<copula::Clayton, copula::Gumbel, copula::Frank, copula::Amh, copula::TCopula, copula::Gaussian>;

inline std::string to_string(const CopulaSpec& c) {
  using detail::call_form;
  return std::visit(overloaded{
                        [](const copula::Clayton& d) { return call_form("clayton", d.theta); },
                        [](const copula::Gumbel& d) { return call_form("gumbel", d.theta); },
                        [](const copula::Frank& d) { return call_form("frank", d.theta); },
                        [](const copula::Amh& d) { return call_form("amh", d.theta); },
                        [](const copula::TCopula& d) { return call_form("t", d.rho, d.df); },
                        [](const copula::Gaussian& d) { return call_form("gaussian", d.rho); },
                    },
                    c);
}

inline void validate(const CopulaSpec& c, std::size_t p) {
  using detail::require;
  const std::string name = to_string(c);
  require(p >= 2, name + ": copulas need p >= 2");
  const double pd = static_cast<double>(p);
  std::visit(overloaded{
                 [&](const copula::Clayton& d) { require(d.theta > 0 && std::isfinite(d.theta), name + ": need theta > 0"); },
                 [&](const copula::Gumbel& d) { require(d.theta >= 1 && std::isfinite(d.theta), name + ": need theta >= 1"); },
                 [&](const copula::Frank& d) {
                   require(d.theta != 0 && std::isfinite(d.theta), name + ": need theta != 0");
                   require(d.theta > 0 || p == 2, name + ": negative theta is only admissible for p = 2");
                 },
                 [&](const copula::Amh& d) { require(d.theta >= 0 && d.theta < 1, name + ": need 0 <= theta < 1"); },
                 [&](const copula::TCopula& d) {
                   require(d.rho > -1.0 / (pd - 1.0) && d.rho < 1.0, name + ": rho outside the equicorrelation range");
                   require(d.df > 0 && std::isfinite(d.df), name + ": need df > 0");
                 },
                 [&](const copula::Gaussian& d) {
                   require(d.rho > -1.0 / (pd - 1.0) && d.rho < 1.0, name + ": rho outside the equicorrelation range");
                 },
             },
             c);
}

namespace detail {

/// Logarithmic-series variate with P(V = k) = -q^k / (k log(1 - q)),
/// parameterised by h = log(1 - q) < 0 (Kemp's "LK" algorithm).
inline double log_series(Stream& rng, double q, double h) {
  const double u = rng.uniform();
  if (u > q) return 1.0;
  const double r = -std::expm1(h * rng.uniform());
  if (u < r * r) return std::floor(1.0 + std::log(u) / std::log(r));
  return u > r ? 1.0 : 2.0;
}

/// Positive stable variate with Laplace transform exp(-s^alpha), 0 < alpha < 1
/// (Chambers-Mallows-Stuck / Kanter form).
inline double positive_stable(Stream& rng, double alpha) {
  const double theta = M_PI * rng.uniform();
  const double w = rng.exponential();
  const double a = std::sin(alpha * theta) / std::pow(std::sin(theta), 1.0 / alpha);
  const double b = std::pow(std::sin((1.0 - alpha) * theta) / w, (1.0 - alpha) / alpha);
  return a * b;
}

inline Matrix equicorrelation(std::size_t p, double rho) {
  const auto pi = static_cast<Eigen::Index>(p);
  Matrix r = Matrix::Constant(pi, pi, rho);
  r.diagonal().setOnes();
  return r;
}

inline Matrix cholesky_lower(const Matrix& m, const std::string& what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw InvalidInput(what + ": matrix is not positive definite");
  return llt.matrixL();
}

using RowFill = std::function<void(Stream&, double*)>;

inline RowFill copula_row_sampler(const CopulaSpec& c, std::size_t p) {
  validate(c, p);
  return std::visit(
      overloaded{
          [p](const copula::Clayton& d) -> RowFill {
            const double shape = 1.0 / d.theta;
            return [p, shape, theta = d.theta](Stream& rng, double* row) {
              const double v = boost::math::gamma_p_inv(shape, rng.uniform());
              for (std::size_t j = 0; j < p; ++j) {
                row[j] = open_unit(std::exp(-std::log1p(rng.exponential() / v) / theta));
              }
            };
          },
          [p](const copula::Gumbel& d) -> RowFill {
            const double alpha = 1.0 / d.theta;
            return [p, alpha](Stream& rng, double* row) {
              const double v = alpha < 1.0 ? positive_stable(rng, alpha) : 1.0;
              for (std::size_t j = 0; j < p; ++j) row[j] = open_unit(std::exp(-std::pow(rng.exponential() / v, alpha)));
            };
          },
          [p](const copula::Frank& d) -> RowFill {
            const double theta = d.theta;
            if (theta < 0.0) {
              // Bivariate only: conditional inversion of C(v | u).
              return [theta](Stream& rng, double* row) {
                const double u = rng.uniform();
                const double w = rng.uniform();
                const double a = std::exp(-theta * u);
                row[0] = u;
                row[1] = open_unit(-std::log1p(w * std::expm1(-theta) / (a * (1.0 - w) + w)) / theta);
              };
            }
            const double q = -std::expm1(-theta);  // 1 - e^{-theta}
            const double h = -theta;               // log(1 - q)
            return [p, theta, q, h](Stream& rng, double* row) {
              const double v = log_series(rng, q, h);
              for (std::size_t j = 0; j < p; ++j) {
                const double s = rng.exponential() / v;
                row[j] = open_unit(-std::log1p(-q * std::exp(-s)) / theta);
              }
            };
          },
          [p](const copula::Amh& d) -> RowFill {
            const double theta = d.theta;
            return [p, theta](Stream& rng, double* row) {
              const double v = theta > 0.0 ? 1.0 + std::floor(std::log(rng.uniform()) / std::log(theta)) : 1.0;
              for (std::size_t j = 0; j < p; ++j) {
                row[j] = open_unit((1.0 - theta) / (std::exp(rng.exponential() / v) - theta));
              }
            };
          },
          [p](const copula::TCopula& d) -> RowFill {
            const Matrix l = cholesky_lower(equicorrelation(p, d.rho), "t copula");
            const double df = d.df;
            return [p, l, df](Stream& rng, double* row) {
              const boost::math::students_t_distribution<double> tdist(df);
              Vector y(static_cast<Eigen::Index>(p));
              for (std::size_t j = 0; j < p; ++j) y(static_cast<Eigen::Index>(j)) = rng.normal();
              const double chi = 2.0 * boost::math::gamma_p_inv(0.5 * df, rng.uniform());
              const Vector x = (l * y) / std::sqrt(chi / df);
              for (std::size_t j = 0; j < p; ++j) row[j] = open_unit(boost::math::cdf(tdist, x(static_cast<Eigen::Index>(j))));
            };
          },
          [p](const copula::Gaussian& d) -> RowFill {
            const Matrix l = cholesky_lower(equicorrelation(p, d.rho), "gaussian copula");
            return [p, l](Stream& rng, double* row) {
              Vector y(static_cast<Eigen::Index>(p));
              for (std::size_t j = 0; j < p; ++j) y(static_cast<Eigen::Index>(j)) = rng.normal();
              const Vector x = l * y;
              for (std::size_t j = 0; j < p; ++j) row[j] = open_unit(phi_cdf(x(static_cast<Eigen::Index>(j))));
            };
          },
      },
      c);
}

/// Rows per independent substream.
inline constexpr std::size_t kBlockRows = 1024;

/// Fills `count` rows of width `p` block by block; block b uses substream
/// (seed, b). Blocks run in parallel only when there are several of them.
inline RowMatrix fill_rows(std::size_t count, std::size_t p, std::uint64_t seed, const RowFill& fill) {
  RowMatrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(p));
  const std::size_t blocks = (count + kBlockRows - 1) / kBlockRows;
  const std::uint64_t base = tagged_seed(seed, StreamTag::kSampleBlock);
  auto run_block = [&](std::size_t b) {
    Stream rng(base, b);
    const std::size_t end = std::min(count, (b + 1) * kBlockRows);
    for (std::size_t i = b * kBlockRows; i < end; ++i) fill(rng, out.data() + i * p);
  };
  parallel_for(blocks, blocks >= 4 ? default_threads() : 1u, run_block);
  return out;
}

}  // namespace detail

/// count x p matrix of copula uniforms.
inline RowMatrix copula_sample(const CopulaSpec& c, std::size_t p, std::size_t count, std::uint64_t seed) {
  return detail::fill_rows(count, p, seed, detail::copula_row_sampler(c, p));
}

/// Draws from Trunc(a, b, mu, sigma) by inversion.
inline Vector trunc_normal_sample(double a, double b, double mu, double sigma, std::size_t count, std::uint64_t seed) {
  const MarginalSpec spec = marginal::TruncNormal{a, b, mu, sigma};
  validate(spec);
  if (!(detail::trunc_mass((a - mu) / sigma, (b - mu) / sigma) > 1e-12)) {
    throw InvalidInput("trunc_normal_sample: interval carries probability below 1e-12");
  }
  const RowMatrix m = detail::fill_rows(count, 1, seed, [&](Stream& rng, double* row) {
    row[0] = marginal_quantile(spec, rng.uniform());
  });
  return m.col(0);
}

// ---------------------------------------------------------------------------
// Joint laws

/// p independent coordinates with a common marginal.
struct ProductMarginal {
  MarginalSpec marginal;
  std::size_t p = 1;
};

/// sum_k w_k N(mean_k, cov_k).
struct NormalMixture {
  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Matrix> covs;
};

/// Copula dependence with one marginal per coordinate.
struct CopulaLaw {
  CopulaSpec copula;
  std::vector<MarginalSpec> marginals;
};

struct MultivariateNormal {
  Vector mean;
  Matrix cov;
};

/// N(0, I_p) / sqrt(chi2_df / df).
struct MultivariateT {
  double df = 1.0;
  std::size_t p = 1;
};

using DistributionSpec = std::variant<ProductMarginal, NormalMixture, CopulaLaw, MultivariateNormal, MultivariateT>;

inline std::size_t dimension(const DistributionSpec& spec) {
  return std::visit(overloaded{
                        [](const ProductMarginal& d) { return d.p; },
                        [](const NormalMixture& d) { return d.means.empty() ? std::size_t{0} : static_cast<std::size_t>(d.means.front().size()); },
                        [](const CopulaLaw& d) { return d.marginals.size(); },
                        [](const MultivariateNormal& d) { return static_cast<std::size_t>(d.mean.size()); },
                        [](const MultivariateT& d) { return d.p; },
                    },
                    spec);
}

inline void validate(const DistributionSpec& spec) {
  using detail::require;
  std::visit(overloaded{
                 [](const ProductMarginal& d) {
                   require(d.p >= 1, "product: p must be >= 1");
                   validate(d.marginal);
                 },
                 [](const NormalMixture& d) {
                   require(!d.weights.empty(), "normal mixture: no components");
                   require(d.weights.size() == d.means.size() && d.means.size() == d.covs.size(),
                           "normal mixture: weights, means and covariances differ in length");
                   double total = 0.0;
                   for (double w : d.weights) {
                     require(w > 0.0 && std::isfinite(w), "normal mixture: weights must be positive");
                     total += w;
                   }
                   require(std::abs(total - 1.0) < 1e-9, "normal mixture: weights must sum to 1");
                   const auto p = d.means.front().size();
                   require(p >= 1, "normal mixture: empty mean");
                   for (std::size_t k = 0; k < d.means.size(); ++k) {
                     require(d.means[k].size() == p && d.covs[k].rows() == p && d.covs[k].cols() == p,
                             "normal mixture: component dimensions differ");
                     detail::cholesky_lower(d.covs[k], "normal mixture covariance");
                   }
                 },
                 [](const CopulaLaw& d) {
                   validate(d.copula, d.marginals.size());
                   for (const auto& m : d.marginals) validate(m);
                 },
                 [](const MultivariateNormal& d) {
                   require(d.mean.size() >= 1 && d.cov.rows() == d.mean.size() && d.cov.cols() == d.mean.size(),
                           "multivariate normal: dimension mismatch");
                   require(d.mean.allFinite(), "multivariate normal: non-finite mean");
                   detail::cholesky_lower(d.cov, "multivariate normal covariance");
                 },
                 [](const MultivariateT& d) {
                   require(d.p >= 1, "multivariate t: p must be >= 1");
                   require(d.df > 0 && std::isfinite(d.df), "multivariate t: need df > 0");
                 },
             },
             spec);
}

namespace detail {

inline RowFill joint_row_sampler(const DistributionSpec& spec) {
  validate(spec);
  return std::visit(
      overloaded{
          [](const ProductMarginal& d) -> RowFill {
            return [d](Stream& rng, double* row) {
              for (std::size_t j = 0; j < d.p; ++j) row[j] = sample_marginal(d.marginal, rng);
            };
          },
          [](const NormalMixture& d) -> RowFill {
            std::vector<Matrix> chol;
            for (const auto& c : d.covs) chol.push_back(cholesky_lower(c, "normal mixture covariance"));
            std::vector<double> cumulative;
            double acc = 0.0;
            for (double w : d.weights) cumulative.push_back(acc += w);
            return [means = d.means, chol, cumulative](Stream& rng, double* row) {
              const double u = rng.uniform() * cumulative.back();
              std::size_t k = 0;
              while (k + 1 < cumulative.size() && u >= cumulative[k]) ++k;
              const auto p = means[k].size();
              Vector y(p);
              for (Eigen::Index j = 0; j < p; ++j) y(j) = rng.normal();
              const Vector x = means[k] + chol[k] * y;
              for (Eigen::Index j = 0; j < p; ++j) row[j] = x(j);
            };
          },
          [](const CopulaLaw& d) -> RowFill {
            const std::size_t p = d.marginals.size();
            RowFill uniforms = copula_row_sampler(d.copula, p);
            return [p, uniforms, marginals = d.marginals](Stream& rng, double* row) {
              uniforms(rng, row);
              for (std::size_t j = 0; j < p; ++j) row[j] = marginal_quantile(marginals[j], row[j]);
            };
          },
          [](const MultivariateNormal& d) -> RowFill {
            const Matrix l = cholesky_lower(d.cov, "multivariate normal covariance");
            return [mean = d.mean, l](Stream& rng, double* row) {
              const auto p = mean.size();
              Vector y(p);
              for (Eigen::Index j = 0; j < p; ++j) y(j) = rng.normal();
              const Vector x = mean + l * y;
              for (Eigen::Index j = 0; j < p; ++j) row[j] = x(j);
            };
          },
          [](const MultivariateT& d) -> RowFill {
            return [d](Stream& rng, double* row) {
              for (std::size_t j = 0; j < d.p; ++j) row[j] = rng.normal();
              const double chi = 2.0 * boost::math::gamma_p_inv(0.5 * d.df, rng.uniform());
              const double scale = 1.0 / std::sqrt(chi / d.df);
              for (std::size_t j = 0; j < d.p; ++j) row[j] *= scale;
            };
          },
      },
      spec);
}

}  // namespace detail

/// n draws from `spec`, deterministic in (spec, n, seed).
inline SampleMatrix sample(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample: n must be >= 1");
  const auto fill = detail::joint_row_sampler(spec);
  return SampleMatrix(detail::fill_rows(n, dimension(spec), seed, fill));
}

/// Draws from a univariate mixture (ScConN or LoConN) or a NormalMixture.
inline RowMatrix mixture_sample(const DistributionSpec& spec, std::size_t count, std::uint64_t seed) {
  const bool ok = std::visit(overloaded{
                                 [](const ProductMarginal& d) {
                                   return std::holds_alternative<marginal::ScConN>(d.marginal) ||
                                          std::holds_alternative<marginal::LoConN>(d.marginal);
                                 },
                                 [](const NormalMixture&) { return true; },
                                 [](const auto&) { return false; },
                             },
                             spec);
  if (!ok) throw InvalidInput("mixture_sample: not a mixture law");
  return sample(spec, count, seed).data();
}

/// Equicorrelation matrix with unit diagonal.
inline Matrix equicorrelation(std::size_t p, double rho) { return detail::equicorrelation(p, rho); }

}  // namespace cgfnt
