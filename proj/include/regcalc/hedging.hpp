#pragma once

// Replication of European and Asian claims along arbitrary finite quadratic
// variation price paths. Prices are handled in discounted units
// (S~ = S e^{-rt}); the hedge h counts shares of S.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "regcalc/csv.hpp"
#include "regcalc/paths.hpp"
#include "regcalc/pde.hpp"
#include "regcalc/regularization.hpp"

namespace regcalc {

/// Short rate r, local volatility sigma(t, x) and spot s0.
struct MarketSpec {
  double r = 0.05;
  double s0 = 100.0;
  Coefficient sigma;
  std::optional<double> constant_sigma;

  static MarketSpec constant(double r, double sigma, double s0) {
    return MarketSpec{r, s0, [sigma](double, double) { return sigma; }, sigma};
  }

  void validate() const {
    if (!(s0 > 0.0)) throw std::invalid_argument("MarketSpec: s0 must be positive");
    if (!(r >= 0.0)) throw std::invalid_argument("MarketSpec: r must be nonnegative");
    if (!sigma) throw std::invalid_argument("MarketSpec: missing volatility function");
  }

  /// Volatility used to size default grids.
  double reference_sigma() const { return constant_sigma ? *constant_sigma : sigma(0.0, s0); }
};

enum class PayoffKind { european, asian };

struct PayoffSpec {
  PayoffKind kind = PayoffKind::european;
  std::function<double(double)> psi;
  double strike = 0.0;  ///< K, Asian claims only

  static PayoffSpec european(std::function<double(double)> psi) {
    return {PayoffKind::european, std::move(psi), 0.0};
  }
  static PayoffSpec asian(std::function<double(double)> psi, double strike) {
    if (!(strike > 0.0)) throw std::invalid_argument("PayoffSpec: Asian strike must be positive");
    return {PayoffKind::asian, std::move(psi), strike};
  }
};

/// Coefficients of the European problem in discounted coordinates.
struct DiscountedCoefficients {
  Coefficient sigma_tilde;                     ///< sigma(t, y e^{rt})
  std::function<double(double)> psi_tilde;     ///< psi(y e^r) e^{-r}
};

inline DiscountedCoefficients transform_coeffs(const MarketSpec& market, const PayoffSpec& payoff) {
  market.validate();
  if (payoff.kind != PayoffKind::european)
    throw std::invalid_argument("transform_coeffs: only European payoffs are transformed");
  const double r = market.r;
  auto sigma = market.sigma;
  auto psi = payoff.psi;
  return {[sigma, r](double t, double y) { return sigma(t, y * std::exp(r * t)); },
          [psi, r](double y) { return psi(y * std::exp(r)) * std::exp(-r); }};
}

/// Default European space grid: s0 e^{+-width * sigma}.
inline PdeGrid european_grid(const MarketSpec& market, std::size_t n_time = 400,
                             std::size_t n_space = 400, double width = 6.0) {
  const double s = market.reference_sigma();
  return {n_time, n_space, market.s0 * std::exp(-width * s), market.s0 * std::exp(width * s)};
}

/// Solves v_t + 1/2 sigma~^2 y^2 v_yy = 0, v(1, .) = psi~.
inline ValueSurface solve_european_pde(const DiscountedCoefficients& coeffs, const PdeGrid& grid) {
  auto sig = coeffs.sigma_tilde;
  Coefficient diffusion = [sig](double t, double y) {
    const double s = sig(t, y);
    return 0.5 * s * s * y * y;
  };
  return solve_backward(grid, diffusion, Coefficient{}, coeffs.psi_tilde);
}

/// Default Asian grid in y = Z/S: [-L, L] with L = 3 (E[int S] + K) / s0.
inline PdeGrid asian_grid(const MarketSpec& market, double strike, std::size_t n_time = 400,
                          std::size_t n_space = 32000) {
  const double mean_integral =
      market.r > 0.0 ? market.s0 * std::expm1(market.r) / market.r : market.s0;
  const double half_width = 3.0 * (mean_integral + strike) / market.s0;
  return {n_time, n_space, -half_width, half_width};
}

/// Solves 1/2 sigma^2 y^2 v_yy + (1 - r y) v_y + v_t = 0, v(1, .) = psi.
inline ValueSurface solve_asian_pde(const MarketSpec& market, const PayoffSpec& payoff,
                                    const PdeGrid& grid) {
  market.validate();
  if (!market.constant_sigma)
    throw std::invalid_argument("solve_asian_pde: requires a constant volatility");
  if (payoff.kind != PayoffKind::asian)
    throw std::invalid_argument("solve_asian_pde: payoff is not Asian");
  const double sigma = *market.constant_sigma;
  const double r = market.r;
  return solve_backward(
      grid, [sigma](double, double y) { return 0.5 * sigma * sigma * y * y; },
      [r](double, double y) { return 1.0 - r * y; }, payoff.psi);
}

/// Operators of the Asian problem, for residual checks.
inline std::pair<Coefficient, Coefficient> asian_operator(const MarketSpec& market) {
  const double sigma = market.constant_sigma.value_or(market.reference_sigma());
  const double r = market.r;
  return {[sigma](double, double y) { return 0.5 * sigma * sigma * y * y; },
          [r](double, double y) { return 1.0 - r * y; }};
}

/// Share holdings along a path, with the number of lookups that fell off
/// the surface and were clamped.
struct HedgePath {
  SamplePath h;
  std::size_t excursions = 0;
};

inline SamplePath discounted(const SamplePath& s, double r) {
  std::vector<double> v(s.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = s[k] * std::exp(-r * s.grid().time(k));
  return SamplePath(s.grid(), std::move(v));
}

/// X0 = v(0, s0).
inline double european_price(const ValueSurface& surface, const MarketSpec& market) {
  return surface.value_at(0.0, market.s0).value;
}

/// h_t = dv/dy(t, S_t e^{-rt}).
inline HedgePath european_hedge(const ValueSurface& surface, const SamplePath& s,
                                const MarketSpec& market) {
  HedgePath out{SamplePath::constant(s.grid(), 0.0), 0};
  auto& h = out.h.mutable_values();
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(s[k] > 0.0)) throw std::invalid_argument("european_hedge: price path must be positive");
    const double t = s.grid().time(k);
    const SurfaceLookup d = surface.delta_at(t, s[k] * std::exp(-market.r * t));
    h[k] = d.value;
    out.excursions += d.clamped ? 1 : 0;
  }
  return out;
}

/// Z_t = int_0^t S ds - K by a left Riemann sum.
inline SamplePath asian_state(const SamplePath& s, double strike) {
  const SamplePath integral = time_integral(s);
  return integral.map([strike](double v) { return v - strike; });
}

/// X0 = v(0, Z_0 / S_0) S_0 with Z_0 = -K.
inline double asian_price(const ValueSurface& surface, const MarketSpec& market,
                          const PayoffSpec& payoff) {
  return surface.value_at(0.0, -payoff.strike / market.s0).value * market.s0;
}

/// h_t = v(t, xi_t) - dv/dy(t, xi_t) xi_t with xi = Z / S.
inline HedgePath asian_hedge(const ValueSurface& surface, const SamplePath& s,
                             const PayoffSpec& payoff) {
  const SamplePath z = asian_state(s, payoff.strike);
  HedgePath out{SamplePath::constant(s.grid(), 0.0), 0};
  auto& h = out.h.mutable_values();
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double t = s.grid().time(k);
    const double xi = z[k] / s[k];
    const SurfaceLookup v = surface.value_at(t, xi);
    const SurfaceLookup d = surface.delta_at(t, xi);
    h[k] = v.value - d.value * xi;
    out.excursions += v.clamped ? 1 : 0;
  }
  return out;
}

/// Discounted Asian payoff psi(Z_1 / S_1) S_1 e^{-r}.
inline double asian_discounted_payoff(const SamplePath& s, const PayoffSpec& payoff, double r) {
  const double z1 = asian_state(s, payoff.strike).terminal();
  return payoff.psi(z1 / s.terminal()) * s.terminal() * std::exp(-r);
}

struct HedgeResult {
  double x0 = 0.0;
  SamplePath h;
  SamplePath h0;
  SamplePath wealth;  ///< discounted wealth X~
  double terminal_error = 0.0;
  double relative_error = 0.0;  ///< terminal_error / x0
  std::size_t excursions = 0;
};

/// Discounted wealth X~ = x0 + int h d^-S~ and its comparison with the
/// discounted claim. The riskless holding is h0 = (X - h S) / S^0.
inline HedgeResult replicate(const HedgePath& hedge, const SamplePath& s, const MarketSpec& market,
                             Epsilon eps, double x0, double discounted_claim) {
  require_same_grid(hedge.h, s, "replicate");
  const SamplePath s_tilde = discounted(s, market.r);
  const IntegralEstimate gains = forward_integral(hedge.h, s_tilde, eps);
  std::vector<double> wealth(s.size()), h0(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    wealth[k] = x0 + gains.at_node(k);
    h0[k] = wealth[k] - hedge.h[k] * s_tilde[k];
  }
  HedgeResult out{x0,
                  hedge.h,
                  SamplePath(s.grid(), std::move(h0)),
                  SamplePath(s.grid(), std::move(wealth)),
                  0.0,
                  0.0,
                  hedge.excursions};
  out.terminal_error = std::abs(out.wealth.terminal() - discounted_claim);
  out.relative_error = x0 != 0.0 ? out.terminal_error / std::abs(x0) : out.terminal_error;
  return out;
}

/// CSV `path_id,x0,terminal_error,relative_error,excursions`.
inline void write_csv(std::ostream& out, std::span<const HedgeResult> ensemble) {
  out << "path_id,x0,terminal_error,relative_error,excursions\n";
  for (std::size_t i = 0; i < ensemble.size(); ++i)
    csv::row(out, i, ensemble[i].x0, ensemble[i].terminal_error, ensemble[i].relative_error,
             ensemble[i].excursions);
}

}  // namespace regcalc
