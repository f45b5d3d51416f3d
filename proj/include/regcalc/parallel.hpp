#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace regcalc {

namespace detail {
inline std::atomic<unsigned>& worker_count_slot() {
  static std::atomic<unsigned> count{0};
  return count;
}
}  // namespace detail

/// Number of workers used by ensemble loops; 0 means hardware concurrency.
inline void set_worker_count(unsigned n) { detail::worker_count_slot() = n; }

inline unsigned worker_count() {
  const unsigned n = detail::worker_count_slot();
  if (n != 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Work is handed out by index, so results written
/// to slot i do not depend on scheduling. The first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

/// Collects fn(i) for i in [0, n) in index order; T need not be default
/// constructible.
template <class Fn>
auto parallel_map(std::size_t n, Fn&& fn) {
  using T = decltype(fn(std::size_t{0}));
  std::vector<std::optional<T>> slots(n);
  parallel_for(n, [&](std::size_t i) { slots[i].emplace(fn(i)); });
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace regcalc
