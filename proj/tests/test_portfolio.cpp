#include <gtest/gtest.h>

#include <cmath>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "regcalc/portfolio.hpp"

using namespace regcalc;

namespace {

InsiderSpec spec() { return InsiderSpec{}; }

UtilityExperiment experiment(std::uint64_t seed, std::size_t n_paths = 4000) {
  UtilityExperiment ex;
  ex.spec = spec();
  ex.grid = TimeGrid(4096);
  ex.n_paths = n_paths;
  ex.master_seed = seed;
  ex.epsilon = Epsilon{4};
  return ex;
}

}  // namespace

TEST(Wealth, ZeroProportionEarnsTheShortRate) {
  const TimeGrid g(256);
  const SamplePath w = simulate_bm(g, Seed{1, 0});
  const auto dec = decompose_gbm(w, 0.2, 0.08, 0.03);
  const WealthPath x = wealth_from_proportion({SamplePath::constant(g, 0.0)}, dec, Epsilon{4}, 2.0);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(x.x[k], 2.0 * std::exp(0.03 * g.time(k)), 1e-12);
  EXPECT_EQ(x.clamp_incidents, 0u);
}

TEST(Wealth, FullyInvestedTracksThePriceAtUnitWindow) {
  const TimeGrid g(256);
  const SamplePath w = simulate_bm(g, Seed{2, 0});
  const auto dec = decompose_gbm(w, 0.2, 0.08, 0.03);
  const SamplePath s = geometric_transform(w, 100.0, 0.2, 0.08);
  const WealthPath x = wealth_from_proportion({SamplePath::constant(g, 1.0)}, dec, Epsilon{1}, 1.0);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(x.x[k], s[k] / 100.0, 1e-12);
}

TEST(Wealth, StaysPositiveAndCountsClamps) {
  const TimeGrid g(256);
  const SamplePath w = simulate_bm(g, Seed{3, 0});
  const auto dec = decompose_gbm(w, 0.2, 0.08, 0.03);
  const WealthPath x = wealth_from_proportion({SamplePath::constant(g, -1e6)}, dec, Epsilon{1}, 1.0);
  for (double v : x.x.values()) EXPECT_GE(v, 0.0);
  EXPECT_EQ(x.clamp_incidents, 0u);
  const LogPriceDecomposition steep{SamplePath::from_function(g, [](double t) { return 2000.0 * t; }),
                                    SamplePath::constant(g, 0.0), SamplePath::constant(g, 0.0)};
  const WealthPath big = wealth_from_proportion({SamplePath::constant(g, 1.0)}, steep, Epsilon{1}, 1.0);
  for (double v : big.x.values()) EXPECT_LE(v, kWealthCeiling);
  EXPECT_EQ(big.x.terminal(), kWealthCeiling);
  EXPECT_GT(big.clamp_incidents, 0u);
  EXPECT_THROW(wealth_from_proportion({SamplePath::constant(g, 0.0)}, dec, Epsilon{1}, 0.0),
               std::invalid_argument);
}

TEST(DiscountedWealth, NoPositionKeepsInitialCapital) {
  const TimeGrid g(256);
  const SamplePath s = geometric_transform(simulate_bm(g, Seed{4, 0}), 100.0, 0.2, 0.05);
  const SamplePath v = SamplePath::from_function(g, [](double t) { return 0.05 * t; });
  const SamplePath x = discounted_wealth_from_shares(SamplePath::constant(g, 0.0), s, v, Epsilon{4}, 3.0);
  for (double e : x.values()) EXPECT_DOUBLE_EQ(e, 3.0);
}

TEST(DiscountedWealth, ZeroRateIsPlainGains) {
  const TimeGrid g(256);
  const SamplePath s = geometric_transform(simulate_bm(g, Seed{5, 0}), 100.0, 0.2, 0.05);
  const SamplePath h = SamplePath::from_function(g, [](double t) { return std::cos(3.0 * t); });
  const SamplePath x = discounted_wealth_from_shares(h, s, SamplePath::constant(g, 0.0), Epsilon{4}, 1.0);
  const auto gains = oracle::forward_sum(std::vector<double>(h.values().begin(), h.values().end()),
                                         std::vector<double>(s.values().begin(), s.values().end()), 4);
  const auto outer = oracle::forward_sum(std::vector<double>(g.size(), 1.0), gains, 4);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(x[k], 1.0 + outer[k], 1e-9);
}

TEST(InsiderDrift, VanishesAtTheTarget) {
  EXPECT_DOUBLE_EQ(insider_drift_at(0.3, 1.2, 1.2, 1.0 / 64), 0.0);
  EXPECT_DOUBLE_EQ(insider_drift_at(0.5, 0.0, 1.0, 1.0 / 64), 2.0);
  EXPECT_THROW(insider_drift_at(0.99, 0.0, 1.0, 1.0 / 64), std::invalid_argument);
}

TEST(InsiderDrift, SecondMomentIsInverseRemainingTime) {
  const TimeGrid g(1024);
  const std::size_t n = 20000;
  for (double t : {0.0, 0.5, 0.9}) {
    stats::Accumulator acc;
    for (std::size_t i = 0; i < n; ++i) {
      const SamplePath w = simulate_bm(g, Seed{6, i});
      const double h = insider_drift_at(t, w.at(t), w.terminal(), 1.0 / 64);
      acc.add(h * h);
    }
    const double expected = 1.0 / (1.0 - t);
    EXPECT_NEAR(acc.mean(), expected, 4.0 * std::sqrt(2.0) * expected / std::sqrt(double(n))) << t;
  }
}

TEST(InsiderDrift, PathIsFrozenAfterCutoff) {
  const TimeGrid g(64);
  const SamplePath w = simulate_bm(g, Seed{7, 0});
  const SamplePath h = insider_drift(w, w.terminal(), 1.0 / 16);
  const std::size_t cut = ImproperCutoff{1.0 / 16}.node(g);
  for (std::size_t k = cut; k < g.size(); ++k) EXPECT_EQ(h[k], h[cut]);
}

TEST(PortfolioRule, ZeroPremiumReducesToDriftOverSigma) {
  InsiderSpec s = spec();
  s.mu = s.r = 0.05;
  const TimeGrid g(128);
  const SamplePath w = simulate_bm(g, Seed{8, 0});
  const std::size_t cut = ImproperCutoff{s.delta}.node(g);
  const SamplePath pi = optimal_insider_portfolio(s).realize(w, w.terminal(), cut).theta;
  const SamplePath h = insider_drift(w, w.terminal(), s.delta);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(pi[k], h[k] / s.sigma, 1e-12);
}

TEST(PortfolioRule, AdaptedRulesIgnoreTheTerminalDatum) {
  const TimeGrid g(64);
  const SamplePath w = simulate_bm(g, Seed{9, 0});
  const auto dirs = default_directions(spec());
  EXPECT_FALSE(dirs[2].uses_terminal_information());
  EXPECT_TRUE(dirs[3].uses_terminal_information());
  EXPECT_EQ(dirs[2].realize(w, 0.0, 60).theta, dirs[2].realize(w, 5.0, 60).theta);
  EXPECT_TRUE(dirs[0].plus(0.5, dirs[3]).uses_terminal_information());
  const PortfolioRule peek = PortfolioRule::adapted("peek", [](double, std::span<const double> p) {
    return static_cast<double>(p.size());
  });
  const SamplePath seen = peek.realize(w, 0.0, 60).theta;
  for (std::size_t k = 0; k <= 60; ++k) EXPECT_EQ(seen[k], static_cast<double>(k + 1));
}

TEST(LogUtility, RisklessArmHasNoSpread) {
  const UtilityEstimate e = expected_log_utility(PortfolioRule::constant("cash", 0.0), experiment(10, 1000));
  EXPECT_NEAR(e.mean, 0.03 * (1.0 - 1.0 / 64), 1e-12);
  EXPECT_LT(e.se, 1e-12);
}

TEST(LogUtility, MertonMatchesClosedForm) {
  const InsiderSpec s = spec();
  const double p = s.merton_proportion();
  EXPECT_NEAR(analytic_merton_log_utility(s),
              oracle::constant_proportion_log_utility(p, s.mu, s.r, s.sigma, s.x0, 1.0 - s.delta), 1e-14);
  const UtilityEstimate e = expected_log_utility(merton_rule(s), experiment(11));
  EXPECT_NEAR(e.mean, analytic_merton_log_utility(s), 3.0 * e.se);
}

TEST(LogUtility, InsiderGain) {
  EXPECT_NEAR(analytic_insider_gain(1.0 / 64), oracle::insider_gain_quadrature(1.0 / 64), 1e-6);
  const InsiderSpec s = spec();
  const auto table = log_utility_table({merton_rule(s), optimal_insider_portfolio(s)}, experiment(12));
  const UtilityEstimate gain = paired_difference(table, 1, 0);
  EXPECT_EQ(gain.n_nonfinite, 0u);
  EXPECT_NEAR(gain.mean, analytic_insider_gain(s.delta), 3.0 * gain.se);
}

TEST(Gateaux, IntegrandIsLinearInTheDirection) {
  const TimeGrid g(512);
  const SamplePath w = simulate_bm(g, Seed{13, 0});
  const auto dec = decompose_gbm(w, 0.2, 0.08, 0.03);
  const SamplePath pi = SamplePath::constant(g, 1.25);
  const SamplePath a = SamplePath::from_function(g, [](double t) { return t; });
  const SamplePath b = w.map([](double x) { return std::sin(x); });
  const std::size_t node = 500;
  const double combined = gateaux_integrand(pi, linear_combination(2.0, a, -3.0, b), dec, Epsilon{4}, node);
  const double split =
      2.0 * gateaux_integrand(pi, a, dec, Epsilon{4}, node) - 3.0 * gateaux_integrand(pi, b, dec, Epsilon{4}, node);
  EXPECT_NEAR(combined, split, 1e-12);
}

TEST(Gateaux, VanishesAtTheInsiderOptimum) {
  const InsiderSpec s = spec();
  const UtilityExperiment ex = experiment(14, 2000);
  for (const auto& dir : default_directions(s)) {
    const GateauxReport r = gateaux_derivative(optimal_insider_portfolio(s), dir, ex);
    EXPECT_LT(std::abs(r.z_mc), 3.0) << dir.name();
    EXPECT_LT(std::abs(r.agreement_z), 3.0) << dir.name();
    EXPECT_NEAR(r.derivative_mc, r.derivative_fd, 1e-8) << dir.name();
  }
}

TEST(Gateaux, MertonIsNotOptimalForTheInsider) {
  const InsiderSpec s = spec();
  const GateauxReport r = gateaux_derivative(merton_rule(s), insider_drift_rule(s), experiment(15, 2000));
  EXPECT_GT(r.z_mc, 3.0);
}

TEST(OptimalityScan, PeaksAtZero) {
  const InsiderSpec s = spec();
  const auto scan = optimality_scan(optimal_insider_portfolio(s), {PortfolioRule::constant("one", 1.0)},
                                    {-0.5, 0.0, 0.5}, experiment(16, 2000));
  EXPECT_TRUE(scan.all_peak_at_zero());
  EXPECT_EQ(scan.rows.size(), 3u);
  EXPECT_THROW(optimality_scan(merton_rule(s), {}, {0.0, 0.5}, experiment(16, 1000)), std::invalid_argument);
  EXPECT_THROW(optimality_scan(merton_rule(s), {}, {-0.5, 0.5}, experiment(16, 1000)), std::invalid_argument);
}

TEST(Concavity, DefectIsRounding) {
  const TimeGrid g(1024);
  const InsiderSpec s = spec();
  const std::size_t cut = ImproperCutoff{s.delta}.node(g);
  for (std::uint64_t i = 0; i < 10; ++i) {
    const SamplePath w = simulate_bm(g, Seed{17, i});
    const auto dec = decompose_gbm(w, s.sigma, s.mu, s.r);
    const SamplePath pi = optimal_insider_portfolio(s).realize(w, w.terminal(), cut).theta;
    const SamplePath theta = w.map([](double x) { return std::cos(x); });
    EXPECT_LT(concavity_defect(pi, theta, 0.3, dec, Epsilon{4}, cut), 1e-10);
  }
}

TEST(UtilityCsv, Format) {
  std::ostringstream out;
  write_utility_csv(out, {{"merton", UtilityEstimate{0.5, 0.25, 10, 0}}});
  EXPECT_EQ(out.str(), "arm,estimate,se\nmerton,0.5,0.25\n");
}
