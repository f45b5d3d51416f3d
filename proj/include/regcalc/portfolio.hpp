#pragma once

// Strictly positive wealth from proportion strategies, discounted wealth from
// share counts, log-utility estimation, Gateaux derivatives of the log-utility
// functional and the optimal portfolio of an insider who knows L = W_1.
//
// Log-wealth exponent of a proportion strategy theta:
//
//   L^theta = int theta d^-A + int (1 - theta) dV - 1/2 int theta^2 d[A]
//           = int theta d^-xi - 1/2 int theta^2 d[xi] + V,   xi = A - V,
//
// so for log utility the Gateaux derivative at pi in direction theta is
// E[int theta d^-xi - int theta pi d[xi]].
//
// Insider bookkeeping for the model S = s0 exp(sigma W + (mu - sigma^2/2) t),
// A = sigma W + mu t, V = r t: with h(t, L) = (L - W_t)/(1 - t) the optimal
// exposure to W is  h + (mu - r)/sigma,  and the optimal proportion of wealth
// in S is that exposure divided by sigma.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "regcalc/csv.hpp"
#include "regcalc/parallel.hpp"
#include "regcalc/paths.hpp"
#include "regcalc/regularization.hpp"
#include "regcalc/stats.hpp"

namespace regcalc {

inline constexpr double kWealthCeiling = 1e300;

/// Log-price decomposition log S - log S0 = A - 1/2 [A], with the riskless
/// log-growth V.
struct LogPriceDecomposition {
  SamplePath a;
  SamplePath v;
  SamplePath qv_a;
};

/// Exact decomposition for S = s0 exp(sigma W + (mu - sigma^2/2) t).
inline LogPriceDecomposition decompose_gbm(const SamplePath& w, double sigma, double mu, double r) {
  const TimeGrid& g = w.grid();
  std::vector<double> a(w.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = sigma * w[k] + mu * g.time(k);
  return {SamplePath(g, std::move(a)), SamplePath::from_function(g, [r](double t) { return r * t; }),
          SamplePath::from_function(g, [sigma](double t) { return sigma * sigma * t; })};
}

/// Decomposition of an observed positive price path, with [log S] estimated
/// at window eps.
inline LogPriceDecomposition decompose_price(const SamplePath& s, double r, Epsilon eps) {
  const SamplePath log_ratio = s.map([s0 = s.initial()](double x) { return std::log(x / s0); });
  const IntegralEstimate qv = quadratic_variation(log_ratio, eps);
  return {linear_combination(1.0, log_ratio, 0.5, qv.value_path),
          SamplePath::from_function(s.grid(), [r](double t) { return r * t; }), qv.value_path};
}

struct ProportionStrategy {
  SamplePath theta;
  double lower_bound = -std::numeric_limits<double>::infinity();
};

struct WealthPath {
  SamplePath x;
  SamplePath gains;       ///< int theta d^-A
  SamplePath carry;       ///< int (1 - theta) dV
  SamplePath correction;  ///< 1/2 int theta^2 d[A]
  std::size_t clamp_incidents = 0;
};

/// Running exponent components (gains, carry, correction).
inline std::tuple<SamplePath, SamplePath, SamplePath> wealth_components(
    const SamplePath& theta, const LogPriceDecomposition& dec, Epsilon eps) {
  require_same_grid(theta, dec.a, "wealth_components");
  const SamplePath gains = forward_integral(theta, dec.a, eps).value_path;
  const SamplePath carry = stieltjes_integral(theta.map([](double x) { return 1.0 - x; }), dec.v);
  const SamplePath corr = stieltjes_integral(theta.map([](double x) { return 0.5 * x * x; }), dec.qv_a);
  return {gains, carry, corr};
}

/// X = x0 exp(gains + carry - correction).
inline WealthPath wealth_from_proportion(const ProportionStrategy& strategy,
                                         const LogPriceDecomposition& dec, Epsilon eps, double x0) {
  if (!(x0 > 0.0)) throw std::invalid_argument("wealth_from_proportion: x0 must be positive");
  auto [gains, carry, corr] = wealth_components(strategy.theta, dec, eps);
  std::vector<double> x(gains.size());
  std::size_t incidents = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double v = x0 * std::exp(gains[k] + carry[k] - corr[k]);
    if (!std::isfinite(v) || v > kWealthCeiling) {
      v = kWealthCeiling;
      ++incidents;
    }
    x[k] = v;
  }
  return {SamplePath(gains.grid(), std::move(x)), gains, carry, corr, incidents};
}

/// Log-wealth exponent L^theta at node `node`.
inline double log_wealth_exponent(const SamplePath& theta, const LogPriceDecomposition& dec,
                                  Epsilon eps, std::size_t node) {
  auto [gains, carry, corr] = wealth_components(theta, dec, eps);
  return gains[node] + carry[node] - corr[node];
}

/// X~ = x0 - int e^{-V} h S dV + int e^{-V} d^-(int h d^-S).
inline SamplePath discounted_wealth_from_shares(const SamplePath& h, const SamplePath& s,
                                                const SamplePath& v, Epsilon eps, double x0) {
  require_same_grid(h, s, "discounted_wealth_from_shares");
  require_same_grid(s, v, "discounted_wealth_from_shares");
  const SamplePath gains = forward_integral(h, s, eps).value_path;
  const SamplePath discount = v.map([](double x) { return std::exp(-x); });
  std::vector<double> carried(s.size());
  for (std::size_t k = 0; k < carried.size(); ++k) carried[k] = discount[k] * h[k] * s[k];
  const SamplePath financing = stieltjes_integral(SamplePath(s.grid(), std::move(carried)), v);
  const SamplePath discounted_gains = forward_integral(discount, gains, eps).value_path;
  std::vector<double> out(s.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = x0 - financing[k] + discounted_gains[k];
  return SamplePath(s.grid(), std::move(out));
}

struct InsiderSpec {
  double mu = 0.08;
  double r = 0.03;
  double sigma = 0.2;
  double delta = 1.0 / 64.0;
  double x0 = 1.0;

  void validate() const {
    if (!(sigma > 0.0) || !(mu > 0.0) || !(r > 0.0))
      throw std::invalid_argument("InsiderSpec: mu, r, sigma must be positive");
    if (!(delta > 0.0 && delta < 0.5))
      throw std::invalid_argument("InsiderSpec: delta must lie in (0, 1/2)");
    if (!(x0 > 0.0)) throw std::invalid_argument("InsiderSpec: x0 must be positive");
  }
  double merton_proportion() const { return (mu - r) / (sigma * sigma); }
  double market_price_of_risk() const { return (mu - r) / sigma; }
};

/// h(t, L) = (L - W_t) / (1 - t); defined up to the cutoff 1 - delta.
inline double insider_drift_at(double t, double w_t, double terminal_w, double delta) {
  if (t > 1.0 - delta + 1e-12)
    throw std::invalid_argument("insider_drift: t beyond the trading cutoff 1 - delta");
  return (terminal_w - w_t) / (1.0 - t);
}

/// h(., L) along a Brownian path; frozen at its cutoff value after 1 - delta.
inline SamplePath insider_drift(const SamplePath& w, double terminal_w, double delta) {
  const TimeGrid& g = w.grid();
  const std::size_t cut = ImproperCutoff{delta}.node(g);
  std::vector<double> h(w.size());
  for (std::size_t k = 0; k <= cut; ++k) h[k] = insider_drift_at(g.time(k), w[k], terminal_w, delta);
  for (std::size_t k = cut + 1; k < h.size(); ++k) h[k] = h[cut];
  return SamplePath(g, std::move(h));
}

/// A proportion rule evaluated node by node on the observed Brownian path.
/// Adapted rules see (t, W_0..W_t); only rules built with `insider` also see
/// the terminal datum L.
class PortfolioRule {
 public:
  using AdaptedFn = std::function<double(double t, std::span<const double> prefix)>;
  using InsiderFn = std::function<double(double t, std::span<const double> prefix, double l)>;

  static PortfolioRule adapted(std::string name, AdaptedFn fn) {
    PortfolioRule r;
    r.name_ = std::move(name);
    r.fn_ = [fn = std::move(fn)](double t, std::span<const double> p, double) { return fn(t, p); };
    return r;
  }
  static PortfolioRule insider(std::string name, InsiderFn fn) {
    PortfolioRule r;
    r.name_ = std::move(name);
    r.fn_ = std::move(fn);
    r.uses_terminal_ = true;
    return r;
  }

  static PortfolioRule constant(std::string name, double c) {
    return adapted(std::move(name), [c](double, std::span<const double>) { return c; });
  }

  /// this + lambda * other
  PortfolioRule plus(double lambda, const PortfolioRule& other) const {
    PortfolioRule r;
    r.name_ = name_ + "+" + csv::num(lambda) + "*" + other.name_;
    r.uses_terminal_ = uses_terminal_ || other.uses_terminal_;
    r.fn_ = [a = fn_, b = other.fn_, lambda](double t, std::span<const double> p, double l) {
      return a(t, p, l) + lambda * b(t, p, l);
    };
    return r;
  }

  const std::string& name() const noexcept { return name_; }
  bool uses_terminal_information() const noexcept { return uses_terminal_; }

  /// Proportion path up to the cutoff node, held constant afterwards.
  ProportionStrategy realize(const SamplePath& w, double terminal_w, std::size_t cutoff) const {
    const TimeGrid& g = w.grid();
    const double l = uses_terminal_ ? terminal_w : std::numeric_limits<double>::quiet_NaN();
    std::vector<double> theta(w.size());
    for (std::size_t k = 0; k <= cutoff; ++k) theta[k] = fn_(g.time(k), w.values().first(k + 1), l);
    for (std::size_t k = cutoff + 1; k < theta.size(); ++k) theta[k] = theta[cutoff];
    return {SamplePath(g, std::move(theta))};
  }

 private:
  std::string name_;
  InsiderFn fn_;
  bool uses_terminal_ = false;
};

inline PortfolioRule merton_rule(const InsiderSpec& spec) {
  return PortfolioRule::constant("merton", spec.merton_proportion());
}

/// h(t, L) as a proportion direction.
inline PortfolioRule insider_drift_rule(const InsiderSpec& spec) {
  const double delta = spec.delta;
  return PortfolioRule::insider("insider_drift", [delta](double t, std::span<const double> p, double l) {
    return insider_drift_at(t, p.back(), l, delta);
  });
}

/// Optimal exposure to W, h(t, L) + (mu - r)/sigma.
inline PortfolioRule insider_exposure_rule(const InsiderSpec& spec) {
  const double delta = spec.delta, lambda = spec.market_price_of_risk();
  return PortfolioRule::insider("insider_exposure",
                                [delta, lambda](double t, std::span<const double> p, double l) {
                                  return insider_drift_at(t, p.back(), l, delta) + lambda;
                                });
}

/// Optimal proportion of wealth in S, (h(t, L) + (mu - r)/sigma) / sigma.
inline PortfolioRule optimal_insider_portfolio(const InsiderSpec& spec) {
  spec.validate();
  const double delta = spec.delta, lambda = spec.market_price_of_risk(), sigma = spec.sigma;
  return PortfolioRule::insider("insider_optimal",
                                [delta, lambda, sigma](double t, std::span<const double> p, double l) {
                                  return (insider_drift_at(t, p.back(), l, delta) + lambda) / sigma;
                                });
}

/// Default perturbation directions {1, t, sin(W_t)} plus the insider drift.
inline std::vector<PortfolioRule> default_directions(const InsiderSpec& spec) {
  return {PortfolioRule::constant("one", 1.0),
          PortfolioRule::adapted("t", [](double t, std::span<const double>) { return t; }),
          PortfolioRule::adapted("sinW", [](double, std::span<const double> p) { return std::sin(p.back()); }),
          insider_drift_rule(spec)};
}

/// Simulation setup shared by all arms of a comparative experiment: path i
/// uses Seed{master_seed, i} whatever the arm (common random numbers).
struct UtilityExperiment {
  InsiderSpec spec;
  TimeGrid grid{4096};
  std::size_t n_paths = 10000;
  std::uint64_t master_seed = 0;
  Epsilon epsilon{4};

  std::size_t cutoff() const { return ImproperCutoff{spec.delta}.node(grid); }
};

struct UtilityEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n_used = 0;
  std::size_t n_nonfinite = 0;
};

/// Per-path log-wealth log X^theta_{1-delta} for every arm, on common paths.
/// Row i holds path i.
inline std::vector<std::vector<double>> log_utility_table(const std::vector<PortfolioRule>& arms,
                                                          const UtilityExperiment& ex) {
  ex.spec.validate();
  const std::size_t cut = ex.cutoff();
  std::vector<std::vector<double>> table(ex.n_paths, std::vector<double>(arms.size()));
  parallel_for(ex.n_paths, [&](std::size_t i) {
    const SamplePath w = simulate_bm(ex.grid, Seed{ex.master_seed, i});
    const LogPriceDecomposition dec = decompose_gbm(w, ex.spec.sigma, ex.spec.mu, ex.spec.r);
    for (std::size_t a = 0; a < arms.size(); ++a) {
      const ProportionStrategy theta = arms[a].realize(w, w.terminal(), cut);
      table[i][a] = std::log(ex.spec.x0) + log_wealth_exponent(theta.theta, dec, ex.epsilon, cut);
    }
  });
  return table;
}

inline UtilityEstimate summarize_column(const std::vector<std::vector<double>>& table, std::size_t col) {
  stats::Accumulator acc;
  std::size_t bad = 0;
  for (const auto& row : table) {
    if (std::isfinite(row[col]))
      acc.add(row[col]);
    else
      ++bad;
  }
  return {acc.mean(), acc.standard_error(), acc.count(), bad};
}

/// Paired estimate of E[col_a - col_b].
inline UtilityEstimate paired_difference(const std::vector<std::vector<double>>& table,
                                         std::size_t col_a, std::size_t col_b) {
  stats::Accumulator acc;
  std::size_t bad = 0;
  for (const auto& row : table) {
    const double d = row[col_a] - row[col_b];
    if (std::isfinite(d))
      acc.add(d);
    else
      ++bad;
  }
  return {acc.mean(), acc.standard_error(), acc.count(), bad};
}

inline UtilityEstimate expected_log_utility(const PortfolioRule& rule, const UtilityExperiment& ex) {
  return summarize_column(log_utility_table({rule}, ex), 0);
}

/// 1/2 ln(1/delta): expected log-utility advantage of the insider optimum
/// over the Merton proportion when trading stops at 1 - delta.
inline double analytic_insider_gain(double delta) { return 0.5 * std::log(1.0 / delta); }

/// log x0 + (r + (mu - r)^2 / (2 sigma^2)) (1 - delta).
inline double analytic_merton_log_utility(const InsiderSpec& s) {
  const double lam = s.market_price_of_risk();
  return std::log(s.x0) + (s.r + 0.5 * lam * lam) * (1.0 - s.delta);
}

struct GateauxReport {
  std::string direction;
  double derivative_mc = 0.0;
  double se_mc = 0.0;
  double z_mc = 0.0;
  double derivative_fd = 0.0;
  double se_fd = 0.0;
  double agreement_z = 0.0;  ///< paired (mc - fd) / se
};

/// int theta d^-xi - int theta pi d[xi] at the cutoff, xi = A - V.
inline double gateaux_integrand(const SamplePath& pi, const SamplePath& theta,
                                const LogPriceDecomposition& dec, Epsilon eps, std::size_t node) {
  const SamplePath xi = linear_combination(1.0, dec.a, -1.0, dec.v);
  const double fwd = forward_integral(theta, xi, eps).at_node(node);
  double drift = 0.0;
  for (std::size_t k = 0; k < node; ++k) drift += theta[k] * pi[k] * (dec.qv_a[k + 1] - dec.qv_a[k]);
  return fwd - drift;
}

inline GateauxReport gateaux_derivative(const PortfolioRule& pi, const PortfolioRule& direction,
                                        const UtilityExperiment& ex, double fd_step = 1e-2) {
  ex.spec.validate();
  const std::size_t cut = ex.cutoff();
  std::vector<double> mc(ex.n_paths), fd(ex.n_paths);
  parallel_for(ex.n_paths, [&](std::size_t i) {
    const SamplePath w = simulate_bm(ex.grid, Seed{ex.master_seed, i});
    const LogPriceDecomposition dec = decompose_gbm(w, ex.spec.sigma, ex.spec.mu, ex.spec.r);
    const SamplePath p = pi.realize(w, w.terminal(), cut).theta;
    const SamplePath th = direction.realize(w, w.terminal(), cut).theta;
    mc[i] = gateaux_integrand(p, th, dec, ex.epsilon, cut);
    const double up = log_wealth_exponent(linear_combination(1.0, p, fd_step, th), dec, ex.epsilon, cut);
    const double down = log_wealth_exponent(linear_combination(1.0, p, -fd_step, th), dec, ex.epsilon, cut);
    fd[i] = (up - down) / (2.0 * fd_step);
  });
  const auto a = stats::summarize(mc), b = stats::summarize(fd);
  stats::Accumulator diff;
  for (std::size_t i = 0; i < mc.size(); ++i) diff.add(mc[i] - fd[i]);
  GateauxReport rep{direction.name(), a.mean(), a.standard_error(), stats::z_score(a.mean(), a.standard_error()),
                    b.mean(), b.standard_error(), 0.0};
  // Differences at rounding level are agreement, not signal.
  const double scale = std::abs(a.mean()) + a.standard_error();
  rep.agreement_z = std::abs(diff.mean()) <= 1e-9 * scale ? 0.0
                                                          : stats::z_score(diff.mean(), diff.standard_error());
  return rep;
}

struct ScanRow {
  std::string direction;
  double lambda = 0.0;
  double estimate = 0.0;  ///< E[log X^{pi + lambda theta}]
  double se = 0.0;
  double gain_vs_zero = 0.0;  ///< paired E[log X^{pi+lambda theta} - log X^pi]
  double gain_se = 0.0;
};

struct ScanVerdict {
  std::string direction;
  double best_lambda = 0.0;
  bool peak_at_zero = true;  ///< no lambda != 0 beats lambda = 0 by more than z_crit SE
};

struct OptimalityScan {
  std::vector<ScanRow> rows;
  std::vector<ScanVerdict> verdicts;

  bool all_peak_at_zero() const {
    for (const auto& v : verdicts)
      if (!v.peak_at_zero) return false;
    return true;
  }
};

inline OptimalityScan optimality_scan(const PortfolioRule& pi, const std::vector<PortfolioRule>& directions,
                                      const std::vector<double>& lambdas, const UtilityExperiment& ex,
                                      double z_crit = 3.0) {
  std::size_t zero = lambdas.size();
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (lambdas[i] == 0.0) zero = i;
    bool mirrored = false;
    for (double other : lambdas) mirrored = mirrored || other == -lambdas[i];
    if (!mirrored) throw std::invalid_argument("optimality_scan: lambda grid must be symmetric");
  }
  if (zero == lambdas.size()) throw std::invalid_argument("optimality_scan: lambda grid must contain 0");

  OptimalityScan scan;
  for (const auto& dir : directions) {
    std::vector<PortfolioRule> arms;
    for (double l : lambdas) arms.push_back(pi.plus(l, dir));
    const auto table = log_utility_table(arms, ex);
    ScanVerdict verdict{dir.name(), 0.0, true};
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < arms.size(); ++a) {
      const UtilityEstimate level = summarize_column(table, a);
      const UtilityEstimate gain = paired_difference(table, a, zero);
      scan.rows.push_back({dir.name(), lambdas[a], level.mean, level.se, gain.mean, gain.se});
      if (level.mean > best) {
        best = level.mean;
        verdict.best_lambda = lambdas[a];
      }
      if (a != zero && stats::z_score(gain.mean, gain.se) > z_crit) verdict.peak_at_zero = false;
    }
    scan.verdicts.push_back(verdict);
  }
  return scan;
}

/// |L^{pi + lambda(theta - pi)} - L^pi - lambda (L^theta - L^pi)
///    - 1/2 lambda (1 - lambda) int (theta - pi)^2 d[xi]|  at `node`.
inline double concavity_defect(const SamplePath& pi, const SamplePath& theta, double lambda,
                               const LogPriceDecomposition& dec, Epsilon eps, std::size_t node) {
  const SamplePath mix = linear_combination(1.0 - lambda, pi, lambda, theta);
  const double l_mix = log_wealth_exponent(mix, dec, eps, node);
  const double l_pi = log_wealth_exponent(pi, dec, eps, node);
  const double l_theta = log_wealth_exponent(theta, dec, eps, node);
  double quad = 0.0;
  for (std::size_t k = 0; k < node; ++k) {
    const double d = theta[k] - pi[k];
    quad += d * d * (dec.qv_a[k + 1] - dec.qv_a[k]);
  }
  return std::abs(l_mix - l_pi - lambda * (l_theta - l_pi) - 0.5 * lambda * (1.0 - lambda) * quad);
}

/// CSV `arm,estimate,se`.
inline void write_utility_csv(std::ostream& out,
                              const std::vector<std::pair<std::string, UtilityEstimate>>& arms) {
  out << "arm,estimate,se\n";
  for (const auto& [name, est] : arms) csv::row(out, name, est.mean, est.se);
}

}  // namespace regcalc
