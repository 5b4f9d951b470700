#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace pagan {

inline int& thread_count_ref() {
  static int n = 1;
  return n;
}

// Process-wide worker count for parallelizable kernels (DAS rows, inference
// batches). Each parallel task owns a disjoint output range and a fixed
// per-element summation order, so results are bit-identical for any count.
inline void set_thread_count(int n) { thread_count_ref() = std::max(1, n); }
inline int thread_count() { return thread_count_ref(); }

template <typename Fn>
void parallel_for(int begin, int end, Fn&& fn, int threads = 0) {
  if (threads <= 0) threads = thread_count();
  const int n = end - begin;
  if (n <= 0) return;
  threads = std::min(threads, n);
  if (threads == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::atomic<int> next(begin);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < end; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace pagan
