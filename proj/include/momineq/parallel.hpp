#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace momineq {

inline int hardware_threads() {
  unsigned int hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(i) for i in [begin, end). Work items must be independent; results
/// must be written to per-index slots so the outcome is order-independent.
inline void parallel_for(long begin, long end, int threads,
                         const std::function<void(long)>& fn) {
  if (end <= begin) return;
  const long total = end - begin;
  if (threads <= 1 || total == 1) {
    for (long i = begin; i < end; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<long>(threads, total));
  std::atomic<long> next{begin};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const long i = next.fetch_add(1);
        if (i >= end) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace momineq
