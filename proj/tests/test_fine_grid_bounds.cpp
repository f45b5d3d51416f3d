// Sup-norm bounds at n = 2^17, eps = 16 dt. The estimators carry a
// window-averaging term of order sup|x| sqrt(eps / 3) (about 0.02 here), which
// vanishes only as eps -> 0; these bounds sit below it.

#include <gtest/gtest.h>

#include <cmath>

#include "regcalc/paths.hpp"
#include "regcalc/regularization.hpp"

using namespace regcalc;

namespace {
const TimeGrid kGrid(1u << 17);
}

TEST(FineGridBounds, IntegrationByPartsLinearFactor) {
  const SamplePath y = SamplePath::from_function(kGrid, [](double t) { return t; });
  for (std::uint64_t i = 0; i < 4; ++i) {
    const SamplePath w = simulate_bm(kGrid, Seed{101, i});
    EXPECT_LT(sup_abs(integration_by_parts_residual(w, y, Epsilon{16})), 0.01) << "path " << i;
  }
}

TEST(FineGridBounds, ItoResidualOfSquare) {
  const ScalarField u{[](double, double x) { return x * x; }, [](double, double) { return 0.0; },
                      [](double, double x) { return 2.0 * x; }, [](double, double) { return 2.0; }};
  for (std::uint64_t i = 0; i < 4; ++i) {
    const SamplePath w = simulate_bm(kGrid, Seed{102, i});
    EXPECT_LT(sup_abs(ito_residual(u, SamplePath::constant(kGrid, 0.0), w, Epsilon{16})), 0.02) << "path " << i;
  }
}

TEST(FineGridBounds, ForwardSelfIntegralIdentity) {
  for (std::uint64_t i = 0; i < 4; ++i) {
    const SamplePath w = simulate_bm(kGrid, Seed{103, i});
    const auto fwd = forward_integral(w, w, Epsilon{16});
    const auto qv = quadratic_variation(w, Epsilon{16});
    double worst = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k)
      worst = std::max(worst, std::abs(fwd.at_node(k) - 0.5 * (w[k] * w[k] - qv.at_node(k))));
    EXPECT_LT(worst, 0.01) << "path " << i;
  }
}

// The same quantities at the unit window, where the sums telescope.
TEST(FineGridBounds, UnitWindowIsExact) {
  const SamplePath w = simulate_bm(kGrid, Seed{104, 0});
  const auto fwd = forward_integral(w, w, Epsilon{1});
  const auto qv = quadratic_variation(w, Epsilon{1});
  double worst = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    worst = std::max(worst, std::abs(fwd.at_node(k) - 0.5 * (w[k] * w[k] - qv.at_node(k))));
  EXPECT_LT(worst, 1e-10);
}
