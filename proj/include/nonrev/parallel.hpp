#pragma once
// Replicate-level parallelism. Results depend only on the index, never on scheduling.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace nonrev {

inline unsigned worker_count(std::size_t jobs) {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("NONREV_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) hw = unsigned(v);
  }
  return unsigned(std::min<std::size_t>(hw, std::max<std::size_t>(jobs, 1)));
}

// Runs fn(i) for i < n. Each i must write only to its own output slot.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  unsigned w = worker_count(n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> err(w);
  for (unsigned t = 0; t < w; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        err[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : err)
    if (e) std::rethrow_exception(e);
}

}  // namespace nonrev
