#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace stocon {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Work items are
/// handed out dynamically, so callers must make fn's effect independent of
/// scheduling (write to slot i, reduce later in index order).
///
/// If several items throw, the exception from the smallest index is rethrown
/// after all workers have stopped, so failures are reported deterministically.
template <class Fn>
void parallel_for(std::int64_t count, int workers, Fn&& fn) {
  if (count <= 0) return;
  const int n_threads = static_cast<int>(
      std::clamp<std::int64_t>(workers, 1, std::max<std::int64_t>(count, 1)));

  std::atomic<std::int64_t> next{0};
  std::atomic<std::int64_t> first_failure{count};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::int64_t error_index = count;

  auto body = [&]() {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= count || i > first_failure.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
          first_failure.store(i);
        }
      }
    }
  };

  if (n_threads == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

/// Worker count from STOCON_THREADS, falling back to `fallback`.
inline int workers_from_env(int fallback = 1) {
  if (const char* env = std::getenv("STOCON_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (...) {
    }
  }
  return std::max(fallback, 1);
}

}  // namespace stocon
