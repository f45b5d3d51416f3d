#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "regcalc/csv.hpp"
#include "regcalc/parallel.hpp"
#include "regcalc/rng.hpp"
#include "regcalc/stats.hpp"

using namespace regcalc;

TEST(CounterRng, SameSeedSameDraws) {
  CounterRng a(Seed{7, 3}), b(Seed{7, 3});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(CounterRng, StreamsAndLanesDiffer) {
  CounterRng base(Seed{7, 3}), stream(Seed{7, 4}), lane(Seed{7, 3}, 1), master(Seed{8, 3});
  const auto x = base.next_u64();
  EXPECT_NE(x, stream.next_u64());
  EXPECT_NE(x, lane.next_u64());
  EXPECT_NE(x, master.next_u64());
}

TEST(CounterRng, UniformStaysInOpenInterval) {
  CounterRng r(Seed{1, 1});
  stats::Accumulator acc;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    acc.add(u);
  }
  EXPECT_NEAR(acc.mean(), 0.5, 4 * std::sqrt(1.0 / 12.0 / 100000));
}

TEST(CounterRng, NormalMoments) {
  CounterRng r(Seed{2, 0});
  const int n = 200000;
  stats::Accumulator acc, fourth;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    acc.add(z);
    fourth.add(z * z * z * z);
  }
  EXPECT_NEAR(acc.mean(), 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(acc.variance(), 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(fourth.mean(), 3.0, 4.0 * fourth.standard_error());
}

TEST(Accumulator, MatchesTwoPassAndMerges) {
  std::vector<double> xs;
  CounterRng r(Seed{3, 0});
  for (int i = 0; i < 1001; ++i) xs.push_back(10.0 + r.normal());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(xs.size() - 1);

  const auto all = stats::summarize(xs);
  EXPECT_NEAR(all.mean(), mean, 1e-12);
  EXPECT_NEAR(all.variance(), var, 1e-10);

  stats::Accumulator left, right;
  for (std::size_t i = 0; i < xs.size(); ++i) (i < 400 ? left : right).add(xs[i]);
  left.merge(right);
  EXPECT_EQ(left.count(), xs.size());
  EXPECT_NEAR(left.mean(), mean, 1e-12);
  EXPECT_NEAR(left.variance(), var, 1e-10);
}

TEST(Accumulator, EmptyAndSingleton) {
  stats::Accumulator a;
  EXPECT_EQ(a.count(), 0u);
  EXPECT_EQ(a.standard_error(), 0.0);
  a.add(5.0);
  EXPECT_EQ(a.mean(), 5.0);
  EXPECT_EQ(a.variance(), 0.0);
}

TEST(ZScore, DegenerateCases) {
  EXPECT_EQ(stats::z_score(0.0, 0.0), 0.0);
  EXPECT_TRUE(std::isinf(stats::z_score(1.0, 0.0)));
  EXPECT_LT(stats::z_score(-1.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(stats::z_score(3.0, 1.5), 2.0);
}

TEST(Kolmogorov, TableValues) {
  // Standard asymptotic critical values: 1.3581 at 5%, 1.6276 at 1%.
  EXPECT_NEAR(stats::kolmogorov_survival(1.3581), 0.05, 5e-4);
  EXPECT_NEAR(stats::kolmogorov_survival(1.6276), 0.01, 2e-4);
  EXPECT_EQ(stats::kolmogorov_survival(0.0), 1.0);
  EXPECT_LT(stats::kolmogorov_survival(3.0), 1e-6);
}

TEST(KsTest, StatisticMatchesBruteForce) {
  std::vector<double> xs;
  CounterRng r(Seed{4, 0});
  for (int i = 0; i < 300; ++i) xs.push_back(r.normal());
  const auto res = stats::ks_test(xs, [](double x) { return oracle::phi(x); });
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  double d = 0.0;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    // empirical CDF just after and just before each jump
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - oracle::phi(sorted[i])));
    d = std::max(d, std::abs(static_cast<double>(i) / n - oracle::phi(sorted[i])));
  }
  EXPECT_NEAR(res.statistic, d, 1e-15);
  EXPECT_EQ(res.n, 300u);
}

TEST(KsTest, SelfTestAcceptsCorrectLawAndRejectsWrongOne) {
  std::vector<double> normal, shifted;
  CounterRng r(Seed{5, 0});
  for (int i = 0; i < 5000; ++i) {
    const double z = r.normal();
    normal.push_back(z);
    shifted.push_back(z + 0.2);
  }
  auto cdf = [](double x) { return oracle::phi(x); };
  EXPECT_GT(stats::ks_test(normal, cdf).p_value, 0.01);
  EXPECT_LT(stats::ks_test(shifted, cdf).p_value, 1e-6);
  EXPECT_THROW(stats::ks_test({}, cdf), std::invalid_argument);
}

TEST(KsTest, PValuesRoughlyUniformUnderNull) {
  CounterRng r(Seed{6, 0});
  int rejected = 0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> xs;
    for (int i = 0; i < 200; ++i) xs.push_back(r.normal());
    if (stats::ks_test(xs, [](double x) { return oracle::phi(x); }).p_value < 0.05) ++rejected;
  }
  // Binomial(400, 0.05): mean 20, sd 4.4.
  EXPECT_GT(rejected, 5);
  EXPECT_LT(rejected, 38);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  set_worker_count(4);
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  set_worker_count(0);
}

TEST(ParallelFor, RethrowsWorkerException) {
  set_worker_count(3);
  EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                 if (i == 57) throw std::runtime_error("boom");
               }),
               std::runtime_error);
  set_worker_count(0);
}

TEST(Csv, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(csv::num(v)), v);
}

TEST(Csv, RowFormatting) {
  std::ostringstream s;
  csv::row(s, std::size_t{3}, 0.5, "x", true);
  EXPECT_EQ(s.str(), "3,0.5,x,true\n");
}
