#pragma once

// Backward solver for terminal-value problems
//
//   v_t + a(t, y) v_yy + b(t, y) v_y = 0  on [0, 1) x [y_min, y_max],
//   v(1, y) = g(y),
//
// with the far-field condition v_yy = 0 at both space boundaries: boundary
// nodes carry v_t + b v_y = 0 with a one-sided difference into the domain,
// which is upwind (and the scheme monotone) wherever b points outward or
// vanishes.
// Crank-Nicolson in time, started with two implicit Euler half-steps; central
// convection, switched to upwind where the cell Peclet number |b| dy / a > 2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "regcalc/csv.hpp"

namespace regcalc {

struct PdeGrid {
  std::size_t n_time = 400;   ///< time steps on [0, 1]
  std::size_t n_space = 400;  ///< space intervals on [y_min, y_max]
  double y_min = 0.0;
  double y_max = 1.0;

  void validate() const {
    if (n_time < 2 || n_space < 4 || !(y_max > y_min) || !std::isfinite(y_min) ||
        !std::isfinite(y_max))
      throw std::invalid_argument("PdeGrid: degenerate grid");
  }
  double dt() const noexcept { return 1.0 / static_cast<double>(n_time); }
  double dy() const noexcept { return (y_max - y_min) / static_cast<double>(n_space); }
  double time(std::size_t i) const noexcept { return static_cast<double>(i) * dt(); }
  double space(std::size_t j) const noexcept {
    return y_min + (y_max - y_min) * static_cast<double>(j) / static_cast<double>(n_space);
  }
};

/// Result of a lookup on a surface; `clamped` is set when the requested point
/// lay outside the space grid and was moved to the boundary.
struct SurfaceLookup {
  double value = 0.0;
  bool clamped = false;
};

/// Solution v(t_i, y_j) of a backward problem, immutable after the solve.
class ValueSurface {
 public:
  ValueSurface(PdeGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != (grid_.n_time + 1) * (grid_.n_space + 1))
      throw std::invalid_argument("ValueSurface: size mismatch");
  }

  const PdeGrid& grid() const noexcept { return grid_; }
  double value(std::size_t i, std::size_t j) const noexcept {
    return values_[i * (grid_.n_space + 1) + j];
  }

  /// Central difference in y at a node; one-sided at the boundaries.
  double delta_node(std::size_t i, std::size_t j) const noexcept {
    const std::size_t last = grid_.n_space;
    const double dy = grid_.dy();
    if (j == 0) return (value(i, 1) - value(i, 0)) / dy;
    if (j == last) return (value(i, last) - value(i, last - 1)) / dy;
    return (value(i, j + 1) - value(i, j - 1)) / (2.0 * dy);
  }

  SurfaceLookup value_at(double t, double y) const { return interpolate(t, y, false); }
  SurfaceLookup delta_at(double t, double y) const { return interpolate(t, y, true); }

 private:
  SurfaceLookup interpolate(double t, double y, bool derivative) const {
    SurfaceLookup out;
    if (y < grid_.y_min || y > grid_.y_max) {
      out.clamped = true;
      y = std::clamp(y, grid_.y_min, grid_.y_max);
    }
    t = std::clamp(t, 0.0, 1.0);
    const double ti = t / grid_.dt();
    const double yj = (y - grid_.y_min) / grid_.dy();
    const std::size_t i = std::min(static_cast<std::size_t>(ti), grid_.n_time - 1);
    const std::size_t j = std::min(static_cast<std::size_t>(yj), grid_.n_space - 1);
    const double wt = ti - static_cast<double>(i);
    const double wy = yj - static_cast<double>(j);
    auto f = [&](std::size_t a, std::size_t b) {
      return derivative ? delta_node(a, b) : value(a, b);
    };
    out.value = (1 - wt) * ((1 - wy) * f(i, j) + wy * f(i, j + 1)) +
                wt * ((1 - wy) * f(i + 1, j) + wy * f(i + 1, j + 1));
    return out;
  }

  PdeGrid grid_;
  std::vector<double> values_;
};

/// CSV `t,y,v`, one row per grid node.
inline void write_csv(std::ostream& out, const ValueSurface& s) {
  out << "t,y,v\n";
  const PdeGrid& g = s.grid();
  for (std::size_t i = 0; i <= g.n_time; ++i)
    for (std::size_t j = 0; j <= g.n_space; ++j) csv::row(out, g.time(i), g.space(j), s.value(i, j));
}

using Coefficient = std::function<double(double t, double y)>;

namespace detail {

// Solves a tridiagonal system in place (Thomas algorithm). sub[0] and sup[n-1]
// are ignored.
inline void solve_tridiagonal(std::vector<double>& sub, std::vector<double>& diag,
                              std::vector<double>& sup, std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double w = sub[i] / diag[i - 1];
    diag[i] -= w * sup[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

struct Stencil {
  std::vector<double> lower, centre, upper;
};

inline Stencil spatial_operator(const PdeGrid& g, const Coefficient& a, const Coefficient& b,
                                double t) {
  const std::size_t n = g.n_space + 1;
  const double dy = g.dy();
  Stencil s{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const double y = g.space(j);
    const double diff = a(t, y) / (dy * dy);
    const double conv = b ? b(t, y) : 0.0;
    s.lower[j] = diff;
    s.centre[j] = -2.0 * diff;
    s.upper[j] = diff;
    if (conv == 0.0) continue;
    const double diffusion = a(t, y);
    const bool upwind = diffusion <= 0.0 || std::abs(conv) * dy / diffusion > 2.0;
    if (!upwind) {
      s.lower[j] -= conv / (2.0 * dy);
      s.upper[j] += conv / (2.0 * dy);
    } else if (conv > 0.0) {
      s.centre[j] -= conv / dy;
      s.upper[j] += conv / dy;
    } else {
      s.lower[j] -= conv / dy;
      s.centre[j] += conv / dy;
    }
  }
  if (b) {
    const double lo = b(t, g.space(0)), hi = b(t, g.space(n - 1));
    s.centre[0] = -lo / dy;
    s.upper[0] = lo / dy;
    s.lower[n - 1] = -hi / dy;
    s.centre[n - 1] = hi / dy;
  }
  return s;
}

// One theta-step from level `old` (time t_old) to time t_new = t_old - step.
inline std::vector<double> theta_step(const PdeGrid& g, const Coefficient& a, const Coefficient& b,
                                      const std::vector<double>& old, double t_old, double step,
                                      double theta) {
  const std::size_t n = g.n_space + 1;
  const double t_new = t_old - step;
  std::vector<double> rhs(old);
  if (theta < 1.0) {
    const Stencil ex = spatial_operator(g, a, b, t_old);
    for (std::size_t j = 0; j < n; ++j) {
      double lv = ex.centre[j] * old[j];
      if (j > 0) lv += ex.lower[j] * old[j - 1];
      if (j + 1 < n) lv += ex.upper[j] * old[j + 1];
      rhs[j] = old[j] + (1.0 - theta) * step * lv;
    }
  }
  const Stencil im = spatial_operator(g, a, b, t_new);
  std::vector<double> sub(n), diag(n), sup(n);
  for (std::size_t j = 0; j < n; ++j) {
    sub[j] = -theta * step * im.lower[j];
    diag[j] = 1.0 - theta * step * im.centre[j];
    sup[j] = -theta * step * im.upper[j];
  }
  solve_tridiagonal(sub, diag, sup, rhs);
  return rhs;
}

}  // namespace detail

/// Solves v_t + a v_yy + b v_y = 0 backward from v(1, .) = terminal.
/// `b` may be empty (no convection).
inline ValueSurface solve_backward(const PdeGrid& grid, const Coefficient& a, const Coefficient& b,
                                   const std::function<double(double)>& terminal) {
  grid.validate();
  const std::size_t n = grid.n_space + 1;
  std::vector<double> level(n);
  for (std::size_t j = 0; j < n; ++j) {
    level[j] = terminal(grid.space(j));
    if (!std::isfinite(level[j])) throw std::invalid_argument("solve_backward: non-finite terminal data");
  }
  std::vector<double> values((grid.n_time + 1) * n);
  std::copy(level.begin(), level.end(), values.begin() + static_cast<std::ptrdiff_t>(grid.n_time * n));

  const double dt = grid.dt();
  for (std::size_t i = grid.n_time; i-- > 0;) {
    const double t_old = grid.time(i + 1);
    if (i + 1 == grid.n_time) {
      level = detail::theta_step(grid, a, b, level, t_old, 0.5 * dt, 1.0);
      level = detail::theta_step(grid, a, b, level, t_old - 0.5 * dt, 0.5 * dt, 1.0);
    } else {
      level = detail::theta_step(grid, a, b, level, t_old, dt, 0.5);
    }
    std::copy(level.begin(), level.end(), values.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return ValueSurface(grid, std::move(values));
}

/// Max |v_t + a v_yy + b v_y| over interior nodes with t <= t_max, using
/// centred differences on the stored solution.
inline double pde_residual(const ValueSurface& s, const Coefficient& a, const Coefficient& b,
                           double t_max) {
  const PdeGrid& g = s.grid();
  const double dt = g.dt(), dy = g.dy();
  double worst = 0.0;
  for (std::size_t i = 1; i < g.n_time && g.time(i) <= t_max; ++i) {
    const double t = g.time(i);
    for (std::size_t j = 1; j < g.n_space; ++j) {
      const double y = g.space(j);
      const double vt = (s.value(i + 1, j) - s.value(i - 1, j)) / (2.0 * dt);
      const double vyy = (s.value(i, j + 1) - 2.0 * s.value(i, j) + s.value(i, j - 1)) / (dy * dy);
      const double vy = (s.value(i, j + 1) - s.value(i, j - 1)) / (2.0 * dy);
      const double r = vt + a(t, y) * vyy + (b ? b(t, y) * vy : 0.0);
      worst = std::max(worst, std::abs(r));
    }
  }
  return worst;
}

}  // namespace regcalc
