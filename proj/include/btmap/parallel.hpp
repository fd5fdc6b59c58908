#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace btmap {

namespace detail {
inline std::atomic<unsigned>& thread_budget() {
  static std::atomic<unsigned> budget{std::max(1u, std::thread::hardware_concurrency())};
  return budget;
}
}  // namespace detail

/// Caps the worker pool used by every parallel loop in the library.
inline void set_num_threads(unsigned n) { detail::thread_budget() = std::max(1u, n); }
inline unsigned num_threads() { return detail::thread_budget(); }

/// Runs body(i) for i in [begin, end). Each index must write only its own
/// output slot; results are then independent of the thread count. The first
/// exception thrown by any worker is rethrown on the caller.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  const std::size_t workers = std::min<std::size_t>(num_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= end) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = end;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace btmap
