#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace regcalc {

/// A path seed: the master seed of an experiment plus the index of the path
/// inside the ensemble. (master, stream) fully determines a generated path.
struct Seed {
  std::uint64_t master = 0;
  std::uint64_t stream = 0;

  friend bool operator==(const Seed&, const Seed&) = default;
};

namespace detail {

// splitmix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based generator: the k-th draw is mix(key, k), so any stream can be
/// reproduced without replaying the others. `lane` separates independent
/// sub-streams of one path (e.g. the Brownian and fractional parts of a mixed
/// process).
class CounterRng {
 public:
  explicit CounterRng(Seed seed, std::uint64_t lane = 0) noexcept
      : key_(detail::mix64(detail::mix64(seed.master) ^
                           detail::mix64(seed.stream + 0x632BE59BD9B4E019ULL)) ^
             detail::mix64(lane * 0xD1B54A32D192ED03ULL + 1)) {}

  std::uint64_t next_u64() noexcept {
    return detail::mix64(key_ ^ detail::mix64(counter_++));
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace regcalc
