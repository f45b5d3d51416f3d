#pragma once

// Seeded generation of the processes the library integrates against:
// Brownian motion, fractional Brownian motion, mixed Brownian + fractional
// processes, the order-one weak Brownian motion built from a single Brownian
// path, and the geometric price transform.

#include <fftw3.h>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "regcalc/csv.hpp"
#include "regcalc/rng.hpp"

namespace regcalc {

/// Uniform grid on [0, t_end] with n_steps + 1 nodes.
class TimeGrid {
 public:
  TimeGrid(std::size_t n_steps, double t_end = 1.0) : n_steps_(n_steps), t_end_(t_end) {
    if (n_steps < 2) throw std::invalid_argument("TimeGrid: n_steps must be >= 2");
    if (!(t_end > 0.0) || t_end > 1.0)
      throw std::invalid_argument("TimeGrid: t_end must lie in (0, 1]");
  }

  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t size() const noexcept { return n_steps_ + 1; }
  double t_end() const noexcept { return t_end_; }
  double dt() const noexcept { return t_end_ / static_cast<double>(n_steps_); }
  double time(std::size_t k) const noexcept {
    return t_end_ * static_cast<double>(k) / static_cast<double>(n_steps_);
  }

  /// Largest node index whose time does not exceed t (clamped to the grid).
  std::size_t node_at_or_before(double t) const noexcept {
    if (t <= 0.0) return 0;
    if (t >= t_end_) return n_steps_;
    const double pos = t / dt();
    auto k = static_cast<std::size_t>(std::floor(pos + 1e-9));
    return std::min(k, n_steps_);
  }

  bool is_power_of_two() const noexcept { return (n_steps_ & (n_steps_ - 1)) == 0; }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  std::size_t n_steps_;
  double t_end_;
};

/// One realized trajectory on a TimeGrid.
class SamplePath {
 public:
  SamplePath(TimeGrid grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw std::invalid_argument("SamplePath: value count does not match grid");
  }

  /// Constant path.
  static SamplePath constant(TimeGrid grid, double value) {
    return SamplePath(grid, std::vector<double>(grid.size(), value));
  }

  /// Path t -> f(t) sampled at the nodes.
  template <class F>
  static SamplePath from_function(TimeGrid grid, F&& f) {
    std::vector<double> v(grid.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(grid.time(k));
    return SamplePath(grid, std::move(v));
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& mutable_values() noexcept { return values_; }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  double initial() const noexcept { return values_.front(); }
  double terminal() const noexcept { return values_.back(); }

  /// Value at node k, with k past the end clamped to the last node.
  double clamped(std::size_t k) const noexcept {
    return values_[std::min(k, values_.size() - 1)];
  }

  /// Linear interpolation between nodes; times outside [0, t_end] take the
  /// endpoint values.
  double at(double t) const noexcept {
    if (t <= 0.0) return values_.front();
    if (t >= grid_.t_end()) return values_.back();
    const double pos = t / grid_.dt();
    const auto k = std::min(static_cast<std::size_t>(pos), grid_.n_steps() - 1);
    const double w = pos - static_cast<double>(k);
    return (1.0 - w) * values_[k] + w * values_[k + 1];
  }

  /// Elementwise map.
  template <class F>
  SamplePath map(F&& f) const {
    std::vector<double> v(values_.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(values_[k]);
    return SamplePath(grid_, std::move(v));
  }

  friend bool operator==(const SamplePath&, const SamplePath&) = default;

 private:
  TimeGrid grid_;
  std::vector<double> values_;
};

inline void require_same_grid(const SamplePath& a, const SamplePath& b, const char* what) {
  if (!(a.grid() == b.grid()))
    throw std::invalid_argument(std::string(what) + ": paths live on different grids");
}

/// a*x + b*y on a shared grid.
inline SamplePath linear_combination(double a, const SamplePath& x, double b, const SamplePath& y) {
  require_same_grid(x, y, "linear_combination");
  std::vector<double> v(x.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = a * x[k] + b * y[k];
  return SamplePath(x.grid(), std::move(v));
}

/// CSV with header `t,value`, one row per node.
inline void write_csv(std::ostream& out, const SamplePath& path) {
  out << "t,value\n";
  for (std::size_t k = 0; k < path.size(); ++k) csv::row(out, path.grid().time(k), path[k]);
}

/// Amplitudes of a Brownian + fractional Brownian mixture.
struct MixedSpec {
  double sigma_w = 1.0;
  double c_h = 0.0;
  double hurst = 0.75;

  void validate() const {
    if (!(hurst > 0.5 && hurst < 1.0))
      throw std::invalid_argument("MixedSpec: hurst must lie strictly in (0.5, 1)");
    if (!(sigma_w >= 0.0) || !(c_h >= 0.0))
      throw std::invalid_argument("MixedSpec: amplitudes must be nonnegative");
  }
};

namespace detail {

inline constexpr std::uint64_t kBrownianLane = 0;
inline constexpr std::uint64_t kFractionalLane = 1;

inline std::vector<double> cumulative_from_zero(std::span<const double> increments) {
  std::vector<double> v(increments.size() + 1, 0.0);
  for (std::size_t k = 0; k < increments.size(); ++k) v[k + 1] = v[k] + increments[k];
  return v;
}

// Autocovariance of unit-step fractional Gaussian noise at lag k.
inline double fgn_autocovariance(std::size_t k, double hurst) {
  const double two_h = 2.0 * hurst;
  const double kk = static_cast<double>(k);
  if (k == 0) return 1.0;
  return 0.5 * (std::pow(kk + 1.0, two_h) - 2.0 * std::pow(kk, two_h) +
                std::pow(kk - 1.0, two_h));
}

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// In-place forward complex DFT of length n.
class FftwBuffer {
 public:
  explicit FftwBuffer(std::size_t n) : n_(n) {
    data_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (data_ == nullptr) throw std::bad_alloc();
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), data_, data_, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  ~FftwBuffer() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(data_);
  }

  double& re(std::size_t i) noexcept { return data_[i][0]; }
  double& im(std::size_t i) noexcept { return data_[i][1]; }
  void forward() noexcept { fftw_execute(plan_); }

 private:
  std::size_t n_;
  fftw_complex* data_ = nullptr;
  fftw_plan plan_ = nullptr;
};

// Exact fGn sample (unit step) by circulant embedding of size 2n.
inline std::vector<double> fgn_circulant(std::size_t n, double hurst, CounterRng& rng) {
  const std::size_t m = 2 * n;
  FftwBuffer buf(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t lag = j <= n ? j : m - j;
    buf.re(j) = fgn_autocovariance(lag, hurst);
    buf.im(j) = 0.0;
  }
  buf.forward();
  std::vector<double> eigen(m);
  double largest = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    eigen[j] = buf.re(j);
    largest = std::max(largest, std::abs(eigen[j]));
  }
  for (double& e : eigen) {
    if (e < -1e-9 * largest)
      throw std::runtime_error("fgn_circulant: embedding is not nonnegative definite");
    e = std::max(e, 0.0);
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double scale = std::sqrt(eigen[j] * inv_m);
    buf.re(j) = scale * rng.normal();
    buf.im(j) = scale * rng.normal();
  }
  buf.forward();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = buf.re(k);
  return out;
}

// Exact fGn sample (unit step) from the Cholesky factor of the n x n Toeplitz
// covariance.
inline std::vector<double> fgn_cholesky(std::size_t n, double hurst, CounterRng& rng) {
  Eigen::MatrixXd cov(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          fgn_autocovariance(i > j ? i - j : j - i, hurst);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("fgn_cholesky: covariance is not positive definite");
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  const Eigen::VectorXd x = llt.matrixL() * z;
  return std::vector<double>(x.data(), x.data() + x.size());
}

inline std::vector<double> brownian_values(const TimeGrid& grid, CounterRng& rng) {
  std::vector<double> inc(grid.n_steps());
  const double sd = std::sqrt(grid.dt());
  for (double& d : inc) d = sd * rng.normal();
  return cumulative_from_zero(inc);
}

inline std::vector<double> fractional_values(const TimeGrid& grid, double hurst, CounterRng& rng) {
  const std::size_t n = grid.n_steps();
  std::vector<double> inc = grid.is_power_of_two() ? fgn_circulant(n, hurst, rng)
                                                    : fgn_cholesky(n, hurst, rng);
  const double scale = std::pow(grid.dt(), hurst);
  for (double& d : inc) d *= scale;
  return cumulative_from_zero(inc);
}

}  // namespace detail

/// Standard Brownian motion, W_0 = 0.
inline SamplePath simulate_bm(const TimeGrid& grid, Seed seed) {
  CounterRng rng(seed, detail::kBrownianLane);
  return SamplePath(grid, detail::brownian_values(grid, rng));
}

/// Fractional Brownian motion with Cov(B_s, B_t) = (s^2H + t^2H - |t-s|^2H)/2.
/// Circulant embedding on power-of-two grids, Cholesky otherwise.
inline SamplePath simulate_fbm(const TimeGrid& grid, double hurst, Seed seed) {
  if (!(hurst > 0.0 && hurst < 1.0))
    throw std::invalid_argument("simulate_fbm: hurst must lie in (0, 1)");
  CounterRng rng(seed, detail::kFractionalLane);
  return SamplePath(grid, detail::fractional_values(grid, hurst, rng));
}

/// sigma_w * W + c_h * B^H with W drawn from the same stream as simulate_bm.
inline SamplePath simulate_mixed(const TimeGrid& grid, const MixedSpec& spec, Seed seed) {
  spec.validate();
  const SamplePath w = simulate_bm(grid, seed);
  if (spec.c_h == 0.0) return w.map([&](double x) { return spec.sigma_w * x; });
  const SamplePath b = simulate_fbm(grid, spec.hurst, seed);
  return linear_combination(spec.sigma_w, w, spec.c_h, b);
}

inline constexpr double kFwyLateFactor = std::numbers::sqrt2 - 1.0;

/// Quadratic-variation density of the order-one weak Brownian motion below:
/// 1 on [0, 1/2], (sqrt2 - 1)^2 after.
inline double fwy_qv_density(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("fwy_qv_density: t outside [0, 1]");
  return t <= 0.5 ? 1.0 : kFwyLateFactor * kFwyLateFactor;
}

/// X_t = B_t on [0, 1/2], X_t = B_{1/2} + (sqrt2 - 1) B_{t-1/2} after, from a
/// single Brownian path B. Marginals are N(0, t) but X is not a Brownian
/// motion.
inline SamplePath simulate_weak_bm_fwy(const TimeGrid& grid, Seed seed) {
  if (grid.t_end() != 1.0)
    throw std::invalid_argument("simulate_weak_bm_fwy: requires t_end = 1");
  if (grid.n_steps() % 2 != 0)
    throw std::invalid_argument("simulate_weak_bm_fwy: n_steps must be even");
  const SamplePath b = simulate_bm(grid, seed);
  const std::size_t half = grid.n_steps() / 2;
  std::vector<double> x(grid.size());
  for (std::size_t k = 0; k <= half; ++k) x[k] = b[k];
  for (std::size_t k = half + 1; k < x.size(); ++k)
    x[k] = b[half] + kFwyLateFactor * b[k - half];
  return SamplePath(grid, std::move(x));
}

/// S_t = s0 exp(sigma x_t + (mu - sigma^2/2) t).
inline SamplePath geometric_transform(const SamplePath& x, double s0, double sigma, double mu) {
  if (!(s0 > 0.0)) throw std::invalid_argument("geometric_transform: s0 must be positive");
  std::vector<double> s(x.size());
  const double drift = mu - 0.5 * sigma * sigma;
  for (std::size_t k = 0; k < s.size(); ++k)
    s[k] = s0 * std::exp(sigma * x[k] + drift * x.grid().time(k));
  return SamplePath(x.grid(), std::move(s));
}

}  // namespace regcalc
