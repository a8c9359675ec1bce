#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace scmkit {

inline unsigned effective_jobs(int jobs) {
  if (jobs > 0) return static_cast<unsigned>(jobs);
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? hc : 1u;
}

/**
 * Runs fn(0..n-1) across up to `jobs` threads (0 = hardware concurrency).
 * Results must be written to per-index slots so the outcome is independent
 * of scheduling. The first exception is rethrown after all workers join.
 */
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const unsigned workers =
      std::min<std::size_t>(effective_jobs(jobs), n ? n : 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace scmkit
