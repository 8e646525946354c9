#pragma once

// Text form of DistributionSpec used on the command line.
//
//   product:<marginal>[:p=K]
//   mixture:scconn(P,B)|loconn(P,A)[:p=K]
//   copula:<family>(ARGS)[:marginal=<marginal>][:p=K]      (p defaults to 2)
//   mvnormal[:mean=M1,M2,...][:rho=R][:p=K]
//   mvt(DF)[:p=K]
//   mvnmix(W1,RHO1;W2,RHO2;...)[:p=K]                     zero-mean components
//
// <marginal> is name(args): normal(mu,sigma) uniform(a,b) beta(a,b)
// gld(l1,l2,l3,l4) trunc(a,b,mu,sigma) laplace logistic cauchy t(df) exp(rate)
// lognormal(mu,sigma) gamma(shape,rate) weibull(shape,scale)
// pareto(scale,shape) chisq(df) scconn(p,b) loconn(p,a). Location/scale
// families may omit their arguments. Copula families: clayton(theta)
// gumbel(theta) frank(theta) amh(theta) t(rho,df) gaussian(rho).

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "cgfnt/distributions.hpp"
#include "cgfnt/error.hpp"

namespace cgfnt {

namespace detail {

class SpecParser {
 public:
  explicit SpecParser(std::string_view text) : s_(text) {}

  DistributionSpec parse() {
    const std::string kind = ident();
    DistributionSpec out;
    if (kind == "product" || kind == "mixture") {
      expect(':');
      const std::size_t at = pos_;
      const MarginalSpec m = marginal();
      const bool is_mix = std::holds_alternative<marginal::ScConN>(m) || std::holds_alternative<marginal::LoConN>(m);
      if (kind == "mixture" && !is_mix) fail("mixture: expects scconn(...) or loconn(...)", at);
      std::size_t p = 1;
      options([&](const std::string& key, std::size_t key_at) {
        if (key != "p") fail("unknown option '" + key + "'", key_at);
        p = count();
      });
      out = ProductMarginal{m, p};
    } else if (kind == "copula") {
      expect(':');
      const CopulaSpec c = copula();
      MarginalSpec m = marginal::Normal{};
      std::size_t p = 2;
      options([&](const std::string& key, std::size_t key_at) {
        if (key == "marginal") {
          m = marginal();
        } else if (key == "p") {
          p = count();
        } else {
          fail("unknown option '" + key + "'", key_at);
        }
      });
      out = CopulaLaw{c, std::vector<MarginalSpec>(p, m)};
    } else if (kind == "mvnormal") {
      std::optional<std::vector<double>> mean;
      std::optional<std::size_t> p;
      double rho = 0.0;
      options([&](const std::string& key, std::size_t key_at) {
        if (key == "mean") {
          mean = number_list(',');
        } else if (key == "rho") {
          rho = number();
        } else if (key == "p") {
          p = count();
        } else {
          fail("unknown option '" + key + "'", key_at);
        }
      });
      const std::size_t dim = mean ? mean->size() : p.value_or(1);
      if (mean && p && *p != mean->size()) fail("mvnormal: p disagrees with the length of mean", 0);
      MultivariateNormal mvn;
      mvn.mean = Vector::Zero(static_cast<Eigen::Index>(dim));
      if (mean) {
        for (std::size_t j = 0; j < dim; ++j) mvn.mean(static_cast<Eigen::Index>(j)) = (*mean)[j];
      }
      mvn.cov = equicorrelation(dim, rho);
      out = mvn;
    } else if (kind == "mvt") {
      const auto args = arguments();
      if (args.size() != 1) fail("mvt: expects one argument (df)", pos_);
      std::size_t p = 1;
      options([&](const std::string& key, std::size_t key_at) {
        if (key != "p") fail("unknown option '" + key + "'", key_at);
        p = count();
      });
      out = MultivariateT{args[0], p};
    } else if (kind == "mvnmix") {
      expect('(');
      std::vector<std::pair<double, double>> comps;
      for (;;) {
        const double w = number();
        expect(',');
        const double rho = number();
        comps.emplace_back(w, rho);
        if (peek() == ';') {
          ++pos_;
          continue;
        }
        expect(')');
        break;
      }
      std::size_t p = 2;
      options([&](const std::string& key, std::size_t key_at) {
        if (key != "p") fail("unknown option '" + key + "'", key_at);
        p = count();
      });
      NormalMixture mix;
      for (const auto& [w, rho] : comps) {
        mix.weights.push_back(w);
        mix.means.push_back(Vector::Zero(static_cast<Eigen::Index>(p)));
        mix.covs.push_back(equicorrelation(p, rho));
      }
      out = mix;
    } else {
      fail("unknown distribution kind '" + kind + "'", 0);
    }
    if (pos_ != s_.size()) fail("unexpected trailing text", pos_);
    try {
      validate(out);
    } catch (const InvalidInput& e) {
      throw ParseError(std::string("invalid distribution: ") + e.what(), 1, 1);
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& what, std::size_t at) const { throw ParseError(what, 1, at + 1); }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'", pos_);
    ++pos_;
  }

  std::string ident() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (pos_ == start) fail("expected a name", start);
    std::string out(s_.substr(start, pos_ - start));
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  }

  double number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                s_[pos_] == '-' || s_[pos_] == '+')) {
      ++pos_;
    }
    const std::string_view tok = s_.substr(start, pos_ - start);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
      fail("expected a number, got '" + std::string(tok) + "'", start);
    }
    return v;
  }

  std::size_t count() {
    const std::size_t start = pos_;
    const double v = number();
    if (!(v >= 1.0) || v != std::floor(v) || v > 1e6) fail("expected a positive integer", start);
    return static_cast<std::size_t>(v);
  }

  std::vector<double> number_list(char sep) {
    std::vector<double> out{number()};
    while (peek() == sep) {
      ++pos_;
      out.push_back(number());
    }
    return out;
  }

  /// Optional parenthesised argument list.
  std::vector<double> arguments() {
    if (peek() != '(') return {};
    ++pos_;
    if (peek() == ')') {
      ++pos_;
      return {};
    }
    auto out = number_list(',');
    expect(')');
    return out;
  }

  template <class Fn>
  void options(Fn&& on_key) {
    while (peek() == ':') {
      ++pos_;
      const std::size_t key_at = pos_;
      const std::string key = ident();
      expect('=');
      on_key(key, key_at);
    }
  }

  MarginalSpec marginal() {
    const std::size_t at = pos_;
    const std::string name = ident();
    const auto a = arguments();
    auto need = [&](std::size_t k) {
      if (a.size() != k) {
        fail(name + " expects " + std::to_string(k) + " argument" + (k == 1 ? "" : "s"), at);
      }
    };
    auto loc_scale = [&](double& loc, double& scale) {
      if (a.empty()) return;
      need(2);
      loc = a[0];
      scale = a[1];
    };
    if (name == "normal") {
      marginal::Normal d;
      loc_scale(d.mu, d.sigma);
      return d;
    }
    if (name == "uniform") {
      marginal::Uniform d;
      loc_scale(d.a, d.b);
      return d;
    }
    if (name == "beta") return need(2), marginal::Beta{a[0], a[1]};
    if (name == "gld") return need(4), marginal::Gld{a[0], a[1], a[2], a[3]};
    if (name == "trunc") return need(4), marginal::TruncNormal{a[0], a[1], a[2], a[3]};
    if (name == "laplace") {
      marginal::Laplace d;
      loc_scale(d.loc, d.scale);
      return d;
    }
    if (name == "logistic") {
      marginal::Logistic d;
      loc_scale(d.loc, d.scale);
      return d;
    }
    if (name == "cauchy") {
      marginal::Cauchy d;
      loc_scale(d.loc, d.scale);
      return d;
    }
    if (name == "t") return need(1), marginal::StudentT{a[0]};
    if (name == "exp") {
      if (a.empty()) return marginal::Exponential{};
      return need(1), marginal::Exponential{a[0]};
    }
    if (name == "lognormal") return need(2), marginal::LogNormal{a[0], a[1]};
    if (name == "gamma") return need(2), marginal::Gamma{a[0], a[1]};
    if (name == "weibull") return need(2), marginal::Weibull{a[0], a[1]};
    if (name == "pareto") return need(2), marginal::Pareto{a[0], a[1]};
    if (name == "chisq") return need(1), marginal::ChiSq{a[0]};
    if (name == "scconn") return need(2), marginal::ScConN{a[0], a[1]};
    if (name == "loconn") return need(2), marginal::LoConN{a[0], a[1]};
    fail("unknown marginal '" + name + "'", at);
  }

  CopulaSpec copula() {
    const std::size_t at = pos_;
    const std::string name = ident();
    const auto a = arguments();
    auto need = [&](std::size_t k) {
      if (a.size() != k) fail(name + " copula expects " + std::to_string(k) + " argument(s)", at);
    };
    if (name == "clayton") return need(1), copula::Clayton{a[0]};
    if (name == "gumbel") return need(1), copula::Gumbel{a[0]};
    if (name == "frank") return need(1), copula::Frank{a[0]};
    if (name == "amh") return need(1), copula::Amh{a[0]};
    if (name == "t") return need(2), copula::TCopula{a[0], a[1]};
    if (name == "gaussian") return need(1), copula::Gaussian{a[0]};
    fail("unknown copula '" + name + "'", at);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses the text form. Errors are ParseError with column = 1-based offset.
inline DistributionSpec parse_distribution(std::string_view text) { return detail::SpecParser(text).parse(); }

/// Canonical text form; parse_distribution(to_string(s)) reproduces s for
/// every law the grammar can express.
inline std::string to_string(const DistributionSpec& spec) {
  using detail::fmt_num;
  return std::visit(
      overloaded{
          [](const ProductMarginal& d) { return "product:" + to_string(d.marginal) + ":p=" + std::to_string(d.p); },
          [](const NormalMixture& d) {
            std::string out = "mvnmix(";
            for (std::size_t k = 0; k < d.weights.size(); ++k) {
              if (k) out += ';';
              const double rho = d.covs[k].rows() > 1 ? d.covs[k](0, 1) : 0.0;
              out += fmt_num(d.weights[k]) + "," + fmt_num(rho);
            }
            return out + "):p=" + std::to_string(d.means.front().size());
          },
          [](const CopulaLaw& d) {
            return "copula:" + to_string(d.copula) + ":marginal=" + to_string(d.marginals.front()) +
                   ":p=" + std::to_string(d.marginals.size());
          },
          [](const MultivariateNormal& d) {
            std::string out = "mvnormal:mean=";
            for (Eigen::Index j = 0; j < d.mean.size(); ++j) out += (j ? "," : "") + fmt_num(d.mean(j));
            const double rho = d.cov.rows() > 1 ? d.cov(0, 1) : 0.0;
            return out + ":rho=" + fmt_num(rho);
          },
          [](const MultivariateT& d) { return "mvt(" + fmt_num(d.df) + "):p=" + std::to_string(d.p); },
      },
      spec);
}

}  // namespace cgfnt
