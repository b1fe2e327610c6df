#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace metaid {

namespace detail {

inline std::atomic<unsigned>& worker_setting() {
  static std::atomic<unsigned> workers{1};
  return workers;
}

inline thread_local bool in_parallel_region = false;

}  // namespace detail

// Process-wide cap on worker threads. Every parallel loop in the library
// writes results by index, so outputs never depend on this value.
inline void set_worker_count(unsigned n) { detail::worker_setting() = std::max(1u, n); }
inline unsigned worker_count() { return detail::worker_setting(); }

// Runs fn(i) for i in [0, n). Nested calls run serially on the calling thread.
// The first exception thrown by any task is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers =
      detail::in_parallel_region ? 1u : static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    detail::in_parallel_region = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
    detail::in_parallel_region = false;
  };

  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace metaid
