#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mtp {

// Process-wide worker count. 0 means "use MTP_THREADS or 1".
inline int& thread_setting() {
  static int threads = 0;
  return threads;
}

inline void set_threads(int n) { thread_setting() = std::max(0, n); }

inline int thread_count() {
  if (thread_setting() > 0) return thread_setting();
  if (const char* env = std::getenv("MTP_THREADS")) {
    try {
      int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return 1;
}

inline bool& inside_parallel_region() {
  thread_local bool inside = false;
  return inside;
}

// Runs body(i) for i in [0, n). Each index writes only its own output slot,
// so results do not depend on scheduling. The first exception is rethrown.
// Nested calls run serially on the calling worker.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1 || inside_parallel_region()) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      inside_parallel_region() = true;
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mtp
