#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace drsm {

/// Splits [0, n) into `workers` contiguous ranges and runs fn(worker, begin, end)
/// on each, worker 0 on the calling thread. The partition depends only on
/// (n, workers), so per-worker reductions merged in worker order are reproducible.
template <class F>
void parallel_ranges(std::size_t n, int workers, F&& fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(workers, n));
  if (w <= 1) {
    fn(0, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  const auto range = [&](std::size_t i) {
    return std::pair{n * i / w, n * (i + 1) / w};
  };
  for (std::size_t i = 1; i < w; ++i)
    threads.emplace_back([&, i] {
      try {
        auto [b, e] = range(i);
        fn(static_cast<int>(i), b, e);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  try {
    auto [b, e] = range(0);
    fn(0, b, e);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline int effective_workers(int requested, std::size_t n) {
  return static_cast<int>(std::max<std::size_t>(1, std::min<std::size_t>(std::max(requested, 1), n)));
}

}  // namespace drsm
