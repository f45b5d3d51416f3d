#pragma once

// Monte Carlo checks of the A-martingale property E[int_0^t psi(s, X_s) d^-Y_s] = 0
// over a finite family of test strategies, marginal-law (weak Brownian
// motion) checks, the compensator of the order-one weak Brownian motion, and
// PDE-vs-expectation pricing consistency.
//
// A finite family can only refute the property; a passing report is a
// necessary-condition check, never a proof.

#include <cmath>
#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "regcalc/csv.hpp"
#include "regcalc/hedging.hpp"
#include "regcalc/parallel.hpp"
#include "regcalc/paths.hpp"
#include "regcalc/regularization.hpp"
#include "regcalc/stats.hpp"

namespace regcalc {

inline constexpr const char* kFiniteFamilyDisclaimer =
    "# verdicts use a finite strategy family: a pass is a necessary-condition check, not a proof";

struct TestStrategy {
  std::string name;
  std::function<double(double t, double x)> psi;
  double bound = 0.0;  ///< sup |psi| on |x| <= 10, t in [0, 1]
};

/// {1, x, x^2, sin x, 1_{x>0.3}, t x, tanh 5x}.
inline std::vector<TestStrategy> default_strategy_family() {
  return {
      {"one", [](double, double) { return 1.0; }, 1.0},
      {"x", [](double, double x) { return x; }, 10.0},
      {"x2", [](double, double x) { return x * x; }, 100.0},
      {"sin", [](double, double x) { return std::sin(x); }, 1.0},
      {"step0.3", [](double, double x) { return x > 0.3 ? 1.0 : 0.0; }, 1.0},
      {"tx", [](double t, double x) { return t * x; }, 10.0},
      {"tanh5x", [](double, double x) { return std::tanh(5.0 * x); }, 1.0},
  };
}

/// Selects family members by name; throws on an unknown name.
inline std::vector<TestStrategy> select_strategies(const std::vector<std::string>& names) {
  const auto all = default_strategy_family();
  std::vector<TestStrategy> out;
  for (const auto& n : names) {
    bool found = false;
    for (const auto& s : all)
      if (s.name == n) {
        out.push_back(s);
        found = true;
      }
    if (!found) throw std::invalid_argument("unknown test strategy: " + n);
  }
  return out;
}

/// State X the strategy reads and the integrator Y it trades against. For a
/// plain process both are the same path.
struct TestedProcess {
  SamplePath state;
  SamplePath integrator;
};

using ProcessGenerator = std::function<TestedProcess(Seed)>;

struct AMartingaleEntry {
  std::string strategy;
  double checkpoint = 0.0;
  double mean = 0.0;
  double se = 0.0;
  double z = 0.0;
  bool pass = false;
  bool degenerate = false;  ///< SE vanished: every path gave the same value
};

struct AMartingaleReport {
  std::vector<AMartingaleEntry> entries;
  std::size_t n_paths = 0;
  Epsilon epsilon;
  double z_crit = 3.0;

  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
  const AMartingaleEntry& find(const std::string& strategy, double checkpoint) const {
    for (const auto& e : entries)
      if (e.strategy == strategy && std::abs(e.checkpoint - checkpoint) < 1e-12) return e;
    throw std::out_of_range("AMartingaleReport: no entry for " + strategy);
  }
};

struct AMartingaleConfig {
  std::vector<double> checkpoints{0.25, 0.5, 0.75, 1.0 - 1.0 / 64.0};
  std::size_t n_paths = 10000;
  Epsilon epsilon{16};
  double z_crit = 3.0;
  std::uint64_t master_seed = 0;
  double delta = 1.0 / 64.0;  ///< checkpoints must lie in (0, 1 - delta]
};

/// Forward integrals int_0^t psi(s, X_s) d^-Y_s at the checkpoint nodes, one
/// row per strategy.
inline std::vector<std::vector<double>> strategy_integrals(const TestedProcess& p,
                                                           std::span<const TestStrategy> family,
                                                           std::span<const std::size_t> nodes,
                                                           Epsilon eps) {
  std::vector<std::vector<double>> out;
  out.reserve(family.size());
  const TimeGrid& grid = p.state.grid();
  for (const auto& s : family) {
    std::vector<double> psi(grid.size());
    for (std::size_t k = 0; k < psi.size(); ++k) psi[k] = s.psi(grid.time(k), p.state[k]);
    const IntegralEstimate est = forward_integral(SamplePath(grid, std::move(psi)), p.integrator, eps);
    std::vector<double> row;
    for (std::size_t n : nodes) row.push_back(est.at_node(n));
    out.push_back(std::move(row));
  }
  return out;
}

inline AMartingaleReport a_martingale_test(const ProcessGenerator& generator,
                                           const std::vector<TestStrategy>& family,
                                           const AMartingaleConfig& cfg) {
  if (cfg.n_paths < 1000) throw std::invalid_argument("a_martingale_test: need at least 1000 paths");
  for (double t : cfg.checkpoints)
    if (!(t > 0.0 && t <= 1.0 - cfg.delta + 1e-12))
      throw std::invalid_argument("a_martingale_test: checkpoint outside (0, 1 - delta]");

  std::vector<std::vector<std::vector<double>>> per_path(cfg.n_paths);
  std::vector<std::size_t> nodes;
  {
    const TestedProcess first = generator(Seed{cfg.master_seed, 0});
    for (double t : cfg.checkpoints) nodes.push_back(first.state.grid().node_at_or_before(t));
  }
  parallel_for(cfg.n_paths, [&](std::size_t i) {
    const TestedProcess p = generator(Seed{cfg.master_seed, i});
    per_path[i] = strategy_integrals(p, family, nodes, cfg.epsilon);
  });

  AMartingaleReport rep{{}, cfg.n_paths, cfg.epsilon, cfg.z_crit};
  for (std::size_t s = 0; s < family.size(); ++s) {
    for (std::size_t c = 0; c < nodes.size(); ++c) {
      stats::Accumulator acc;
      for (const auto& row : per_path) acc.add(row[s][c]);
      AMartingaleEntry e{family[s].name, cfg.checkpoints[c], acc.mean(), acc.standard_error()};
      e.degenerate = e.se == 0.0;
      e.z = stats::z_score(e.mean, e.se);
      e.pass = !e.degenerate && std::abs(e.z) < cfg.z_crit;
      rep.entries.push_back(e);
    }
  }
  return rep;
}

/// CSV `strategy,checkpoint,mean,se,z,verdict` preceded by a comment line
/// stating the finite-family caveat.
inline void write_csv(std::ostream& out, const AMartingaleReport& rep) {
  out << kFiniteFamilyDisclaimer << '\n';
  out << "strategy,checkpoint,mean,se,z,verdict\n";
  for (const auto& e : rep.entries)
    csv::row(out, e.strategy, e.checkpoint, e.mean, e.se, e.z,
             e.degenerate ? "degenerate" : (e.pass ? "pass" : "fail"));
}

/// Y = X - int_0^. (1 - f_s) X_s / (2 s) ds by a left Riemann sum; nodes
/// where f = 1 contribute nothing and are skipped, so s = 0 is never divided
/// by.
inline SamplePath fwy_compensator(const SamplePath& x,
                                  const std::function<double(double)>& qv_density = fwy_qv_density) {
  const TimeGrid& g = x.grid();
  std::vector<double> y(x.size());
  double correction = 0.0;
  y[0] = x[0];
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    const double t = g.time(k);
    const double gap = 1.0 - qv_density(t);
    if (gap != 0.0) correction += gap * x[k] / (2.0 * t) * g.dt();
    y[k + 1] = x[k + 1] - correction;
  }
  return SamplePath(g, std::move(y));
}

struct MarginalLawEntry {
  double checkpoint = 0.0;
  double variance = 0.0;
  stats::KsResult ks;
};

struct MarginalLawReport {
  std::vector<MarginalLawEntry> entries;
};

/// KS test of {X_t^(i)} against N(0, variance_fn(t)) at each checkpoint.
inline MarginalLawReport marginal_law_check(std::span<const SamplePath> paths,
                                            const std::vector<double>& checkpoints,
                                            const std::function<double(double)>& variance_fn) {
  if (paths.size() < 1000) throw std::invalid_argument("marginal_law_check: need at least 1000 paths");
  MarginalLawReport rep;
  for (double t : checkpoints) {
    std::vector<double> sample;
    sample.reserve(paths.size());
    for (const auto& p : paths) sample.push_back(p.at(t));
    const double var = variance_fn(t);
    const double sd = std::sqrt(var);
    rep.entries.push_back(
        {t, var, stats::ks_test(std::move(sample), [sd](double x) { return stats::normal_cdf(x / sd); })});
  }
  return rep;
}

struct PricingConsistencyReport {
  double pde_price = 0.0;
  double mc_price = 0.0;
  double mc_se = 0.0;
  double gap_in_se = 0.0;
};

/// PDE replication price v(0, s0) against the Monte Carlo mean of
/// psi~(S~_1) with S~ simulated as a martingale (log-Euler, exact for
/// constant volatility).
inline PricingConsistencyReport pricing_consistency_check(const PayoffSpec& payoff,
                                                          const MarketSpec& market,
                                                          std::size_t n_paths, std::uint64_t seed,
                                                          const PdeGrid& grid,
                                                          std::size_t mc_steps = 0) {
  const DiscountedCoefficients co = transform_coeffs(market, payoff);
  const ValueSurface surface = solve_european_pde(co, grid);
  if (mc_steps == 0) mc_steps = market.constant_sigma ? 1 : 200;
  const double dt = 1.0 / static_cast<double>(mc_steps);

  std::vector<double> discounted_payoffs(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    CounterRng rng(Seed{seed, i});
    double log_s = std::log(market.s0);
    for (std::size_t k = 0; k < mc_steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      const double sig = co.sigma_tilde(t, std::exp(log_s));
      log_s += sig * std::sqrt(dt) * rng.normal() - 0.5 * sig * sig * dt;
    }
    discounted_payoffs[i] = co.psi_tilde(std::exp(log_s));
  });
  const stats::Accumulator acc = stats::summarize(discounted_payoffs);
  PricingConsistencyReport rep{european_price(surface, market), acc.mean(), acc.standard_error()};
  rep.gap_in_se = stats::z_score(rep.pde_price - rep.mc_price, rep.mc_se);
  return rep;
}

}  // namespace regcalc
