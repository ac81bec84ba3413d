#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace thermo {

namespace detail {
inline std::atomic<unsigned>& max_threads_slot() {
  static std::atomic<unsigned> slot{0};  // 0 = resolve from hardware/env
  return slot;
}
}  // namespace detail

// Caps worker threads for all parallel loops. 0 restores the default
// (THERMO_THREADS env var, else hardware concurrency). Thread count never
// affects results, only wall time.
inline void set_max_threads(unsigned n) { detail::max_threads_slot().store(n); }

inline unsigned effective_threads() {
  unsigned n = detail::max_threads_slot().load();
  if (n != 0) return n;
  if (const char* env = std::getenv("THERMO_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Fork-join loop over [0, n). Work is split into at most `threads` contiguous
// chunks and each chunk runs in index order, so any quantity derived from a
// fixed per-index computation is bit-identical for every thread count.
// `body` must not throw and must write only to disjoint per-index state.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const unsigned threads = std::min<std::size_t>(effective_threads(), n);
  if (threads <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> workers;
  workers.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) {
    const std::size_t begin = std::min(n, t * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(std::size_t{0}, std::min(n, chunk));
  for (auto& w : workers) w.join();
}

}  // namespace thermo
