#pragma once

// Closed-form Black-Scholes values, used as reference values for the PDE
// route.

#include <algorithm>
#include <cmath>

#include "regcalc/stats.hpp"

namespace regcalc::black_scholes {

inline double d1(double s, double k, double r, double sigma, double tau) {
  return (std::log(s / k) + (r + 0.5 * sigma * sigma) * tau) / (sigma * std::sqrt(tau));
}

inline double call_price(double s, double k, double r, double sigma, double tau) {
  if (tau <= 0.0) return std::max(s - k, 0.0);
  const double a = d1(s, k, r, sigma, tau);
  const double b = a - sigma * std::sqrt(tau);
  return s * stats::normal_cdf(a) - k * std::exp(-r * tau) * stats::normal_cdf(b);
}

inline double call_delta(double s, double k, double r, double sigma, double tau) {
  if (tau <= 0.0) return s > k ? 1.0 : 0.0;
  return stats::normal_cdf(d1(s, k, r, sigma, tau));
}

}  // namespace regcalc::black_scholes
