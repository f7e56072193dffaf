#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace csps {

inline int default_workers() {
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// Runs task(i) for i in [0, count) on up to `workers` threads. The first
// exception thrown by any task is rethrown after all threads join.
template <typename Task>
void parallel_for(int count, int workers, Task&& task) {
  workers = std::clamp(workers, 1, std::max(1, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace csps
