#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace slicelm {

// Runs fn(i) for i in [0, n) on up to `threads` workers with static
// contiguous chunks. fn must only write state owned by index i. The first
// exception (lowest chunk) is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t lo = n * w / threads, hi = n * (w + 1) / threads;
    workers.emplace_back([&, lo, hi, w] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace slicelm
