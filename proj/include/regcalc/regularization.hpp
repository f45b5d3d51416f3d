#pragma once

// Regularized stochastic integrals on sample paths. For a window
// eps = m * dt the estimators are
//
//   I(eps, y, x)_j = (1/m) sum_{k<j} y_k (x_{k+m} - x_k)                forward integral
//   C(eps, x, y)_j = (1/m) sum_{k<j} (x_{k+m} - x_k)(y_{k+m} - y_k)     covariation
//
// i.e. left Riemann sums of (1/eps) int_0^t y_s (x_{s+eps} - x_s) ds. Indices
// past the last node read the terminal value.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "regcalc/csv.hpp"
#include "regcalc/paths.hpp"

namespace regcalc {

/// Regularization window as an integer multiple of the grid step.
struct Epsilon {
  std::size_t m = 16;

  double value(const TimeGrid& grid) const noexcept { return static_cast<double>(m) * grid.dt(); }

  void validate(const TimeGrid& grid) const {
    if (m < 1) throw std::invalid_argument("Epsilon: multiplier must be >= 1");
    if (value(grid) > grid.t_end() / 4.0 + 1e-15)
      throw std::invalid_argument("Epsilon: window exceeds a quarter of the horizon");
  }

  friend bool operator==(const Epsilon&, const Epsilon&) = default;
};

enum class IntegralKind { forward_integral, covariation };

inline const char* to_string(IntegralKind kind) {
  return kind == IntegralKind::forward_integral ? "forward-integral" : "covariation";
}

/// Running estimate t -> I(eps, .) or C(eps, .).
struct IntegralEstimate {
  SamplePath value_path;
  Epsilon epsilon;
  IntegralKind kind;

  double terminal() const noexcept { return value_path.terminal(); }
  double at_node(std::size_t k) const noexcept { return value_path[k]; }
};

/// Improper integrals on [0, 1) are evaluated on [0, 1 - delta].
struct ImproperCutoff {
  double delta = 1.0 / 64.0;

  std::size_t node(const TimeGrid& grid) const {
    if (!(delta > 0.0 && delta < grid.t_end()))
      throw std::invalid_argument("ImproperCutoff: delta outside (0, t_end)");
    return grid.node_at_or_before(grid.t_end() - delta);
  }
};

/// Forward integral int_0^t y d^-x.
inline IntegralEstimate forward_integral(const SamplePath& y, const SamplePath& x, Epsilon eps) {
  require_same_grid(y, x, "forward_integral");
  eps.validate(x.grid());
  const std::size_t n = x.grid().n_steps();
  const double inv_m = 1.0 / static_cast<double>(eps.m);
  std::vector<double> out(n + 1, 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += y[k] * (x.clamped(k + eps.m) - x[k]) * inv_m;
    out[k + 1] = acc;
  }
  return {SamplePath(x.grid(), std::move(out)), eps, IntegralKind::forward_integral};
}

/// Covariation [x, y].
inline IntegralEstimate covariation(const SamplePath& x, const SamplePath& y, Epsilon eps) {
  require_same_grid(x, y, "covariation");
  eps.validate(x.grid());
  const std::size_t n = x.grid().n_steps();
  const double inv_m = 1.0 / static_cast<double>(eps.m);
  std::vector<double> out(n + 1, 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += (x.clamped(k + eps.m) - x[k]) * (y.clamped(k + eps.m) - y[k]) * inv_m;
    out[k + 1] = acc;
  }
  return {SamplePath(x.grid(), std::move(out)), eps, IntegralKind::covariation};
}

inline IntegralEstimate quadratic_variation(const SamplePath& x, Epsilon eps) {
  return covariation(x, x, eps);
}

/// Left-point Lebesgue-Stieltjes sum int_0^t y dx for x of bounded variation.
inline SamplePath stieltjes_integral(const SamplePath& y, const SamplePath& x) {
  require_same_grid(y, x, "stieltjes_integral");
  std::vector<double> out(x.size(), 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    acc += y[k] * (x[k + 1] - x[k]);
    out[k + 1] = acc;
  }
  return SamplePath(x.grid(), std::move(out));
}

/// Left Riemann sum int_0^t y ds.
inline SamplePath time_integral(const SamplePath& y) {
  std::vector<double> out(y.size(), 0.0);
  const double dt = y.grid().dt();
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < y.size(); ++k) {
    acc += y[k] * dt;
    out[k + 1] = acc;
  }
  return SamplePath(y.grid(), std::move(out));
}

/// Terminal values of a regularized estimator over a decreasing schedule of
/// windows, with a Richardson limit that assumes a bias linear in eps.
struct ConvergenceReport {
  IntegralKind kind;
  std::vector<double> epsilons;
  std::vector<double> terminal_values;
  std::vector<double> cauchy_gaps;  ///< |T_i - T_{i-1}|, one fewer than epsilons
  double extrapolated = 0.0;
  double tolerance = 0.0;
  bool converged = false;

  /// Least-squares slope of log|T| against log eps; NaN if any value is 0.
  double loglog_slope() const {
    const std::size_t n = epsilons.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (terminal_values[i] == 0.0) return std::numeric_limits<double>::quiet_NaN();
      const double lx = std::log(epsilons[i]);
      const double ly = std::log(std::abs(terminal_values[i]));
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    const double dn = static_cast<double>(n);
    return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
  }
};

inline ConvergenceReport epsilon_sweep(IntegralKind kind, const SamplePath& y, const SamplePath& x,
                                       const std::vector<Epsilon>& schedule,
                                       double tolerance = 1e-2) {
  if (schedule.size() < 3) throw std::invalid_argument("epsilon_sweep: need at least 3 windows");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (schedule[i].m >= schedule[i - 1].m)
      throw std::invalid_argument("epsilon_sweep: schedule must be strictly decreasing");

  ConvergenceReport rep{kind, {}, {}, {}, 0.0, tolerance, false};
  for (const Epsilon& e : schedule) {
    const IntegralEstimate est =
        kind == IntegralKind::forward_integral ? forward_integral(y, x, e) : covariation(y, x, e);
    rep.epsilons.push_back(e.value(x.grid()));
    rep.terminal_values.push_back(est.terminal());
  }
  for (std::size_t i = 1; i < rep.terminal_values.size(); ++i)
    rep.cauchy_gaps.push_back(std::abs(rep.terminal_values[i] - rep.terminal_values[i - 1]));

  const std::size_t last = rep.epsilons.size() - 1;
  const double ea = rep.epsilons[last - 1], eb = rep.epsilons[last];
  const double ta = rep.terminal_values[last - 1], tb = rep.terminal_values[last];
  rep.extrapolated = (ea * tb - eb * ta) / (ea - eb);
  rep.converged = rep.cauchy_gaps.back() < tolerance;
  return rep;
}

/// CSV `epsilon,terminal,gap`; the first row has an empty gap.
inline void write_csv(std::ostream& out, const ConvergenceReport& rep) {
  out << "epsilon,terminal,gap\n";
  for (std::size_t i = 0; i < rep.epsilons.size(); ++i) {
    if (i == 0)
      csv::row(out, rep.epsilons[i], rep.terminal_values[i], "");
    else
      csv::row(out, rep.epsilons[i], rep.terminal_values[i], rep.cauchy_gaps[i - 1]);
  }
}

/// u(v, x) together with its partial derivatives, v being a bounded-variation
/// argument and x a finite quadratic variation argument.
struct ScalarField {
  std::function<double(double, double)> value;
  std::function<double(double, double)> d_v;
  std::function<double(double, double)> d_x;
  std::function<double(double, double)> d_xx;

  void validate() const {
    if (!value || !d_v || !d_x || !d_xx)
      throw std::invalid_argument("ScalarField: value and all derivatives must be supplied");
  }
};

/// Defect of the Ito formula for finite quadratic variation processes:
///   u(v_t, x_t) - u(v_0, x_0) - int u_v dV - int u_x d^-x - 1/2 int u_xx d[x].
inline SamplePath ito_residual(const ScalarField& u, const SamplePath& v, const SamplePath& x,
                               Epsilon eps) {
  u.validate();
  require_same_grid(v, x, "ito_residual");
  eps.validate(x.grid());
  const std::size_t n = x.grid().n_steps();
  const double inv_m = 1.0 / static_cast<double>(eps.m);
  std::vector<double> out(n + 1, 0.0);
  const double u0 = u.value(v[0], x[0]);
  double drift = 0.0, fwd = 0.0, qv = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx_window = x.clamped(k + eps.m) - x[k];
    drift += u.d_v(v[k], x[k]) * (v[k + 1] - v[k]);
    fwd += u.d_x(v[k], x[k]) * dx_window * inv_m;
    qv += u.d_xx(v[k], x[k]) * dx_window * dx_window * inv_m;
    out[k + 1] = u.value(v[k + 1], x[k + 1]) - u0 - drift - fwd - 0.5 * qv;
  }
  return SamplePath(x.grid(), std::move(out));
}

/// Defect of x y - x_0 y_0 = int x dy + int y d^-x for y of bounded variation.
inline SamplePath integration_by_parts_residual(const SamplePath& x, const SamplePath& y,
                                                Epsilon eps) {
  require_same_grid(x, y, "integration_by_parts_residual");
  const SamplePath stieltjes = stieltjes_integral(x, y);
  const IntegralEstimate fwd = forward_integral(y, x, eps);
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = x[k] * y[k] - x[0] * y[0] - stieltjes[k] - fwd.at_node(k);
  return SamplePath(x.grid(), std::move(out));
}

inline double sup_abs(const SamplePath& p) {
  double s = 0.0;
  for (double v : p.values()) s = std::max(s, std::abs(v));
  return s;
}

}  // namespace regcalc
