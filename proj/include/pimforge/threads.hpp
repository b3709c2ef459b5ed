#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace pimforge {

inline unsigned effective_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Chunked parallel loop. Callers only write to disjoint slots, so results
// are independent of the thread count.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = effective_threads(threads);
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t]() {
      for (std::size_t i = t; i < n; i += workers) fn(i);
    });
  }
  for (std::thread& th : pool) th.join();
}

}  // namespace pimforge
