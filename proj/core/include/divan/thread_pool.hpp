#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace divan {

inline std::size_t default_thread_count() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs task(i) for every i in [0, count) on up to `threads` workers pulling from a shared
/// counter. Tasks must write disjoint outputs. The first exception thrown by any task is
/// rethrown on the calling thread after all workers have joined.
template <typename Task>
void parallel_for(std::size_t count, std::size_t threads, Task&& task) {
  if (threads == 0) {
    threads = default_thread_count();
  }
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (auto i = std::size_t{0}; i < count; ++i) {
      task(i);
    }
    return;
  }

  auto next = std::atomic<std::size_t>{0};
  auto failure = std::exception_ptr{};
  auto failure_mutex = std::mutex{};
  auto worker = [&] {
    while (true) {
      const auto i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) {
        return;
      }
      try {
        task(i);
      } catch (...) {
        const auto lock = std::lock_guard{failure_mutex};
        if (!failure) {
          failure = std::current_exception();
        }
        next.store(count, std::memory_order_relaxed);
      }
    }
  };

  auto pool = std::vector<std::jthread>{};
  pool.reserve(threads - 1);
  for (auto t = std::size_t{1}; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  worker();
  pool.clear();
  if (failure) {
    std::rethrow_exception(failure);
  }
}

}  // namespace divan
