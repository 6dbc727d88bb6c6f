#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace perigen {

/// Worker bound: explicit value if positive, else PERIGEN_JOBS, else the
/// hardware concurrency.
inline unsigned resolve_jobs(int requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char* env = std::getenv("PERIGEN_JOBS")) {
    int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on at most `jobs` threads. Each index is
/// visited exactly once; the first exception is rethrown after the barrier.
template <class Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (n == 0) return;
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(jobs);
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace perigen
