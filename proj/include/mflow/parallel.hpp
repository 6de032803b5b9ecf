#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mflow {

/// Worker count used by parallel loops: hardware concurrency, capped by the
/// MARGINALFLOW_THREADS environment variable when set. Results never depend
/// on this value; it only bounds wall-clock time.
inline unsigned worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("MARGINALFLOW_THREADS")) {
    long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1 && static_cast<unsigned>(cap) < hw) hw = static_cast<unsigned>(cap);
  }
  return hw;
}

/// Runs fn(i) for i in [0, n). Iterations must be independent; outputs are
/// then identical to the sequential loop for any thread count. The first
/// exception thrown by any iteration is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  if (n <= 0) return;
  unsigned workers = worker_count();
  if (workers <= 1 || n < 2) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<std::int64_t>(workers) > n) workers = static_cast<unsigned>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    std::int64_t begin = n * w / workers;
    std::int64_t end = n * (w + 1) / workers;
    pool.emplace_back([begin, end, &fn, &error, &failed, &error_mutex] {
      try {
        for (std::int64_t i = begin; i < end; ++i) {
          if (failed.load(std::memory_order_relaxed)) return;
          fn(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Block-wise reduction with a thread-count-independent result: the range is
/// split into fixed-size blocks, block results are computed (possibly in
/// parallel) and folded in block order on the calling thread.
template <typename T, typename BlockFn, typename FoldFn>
T parallel_reduce(std::int64_t n, std::int64_t block_size, T init, BlockFn&& block_fn,
                  FoldFn&& fold) {
  if (n <= 0) return init;
  if (block_size < 1) block_size = 1;
  std::int64_t n_blocks = (n + block_size - 1) / block_size;
  std::vector<T> partial(static_cast<std::size_t>(n_blocks), init);
  parallel_for(n_blocks, [&](std::int64_t b) {
    std::int64_t begin = b * block_size;
    std::int64_t end = std::min(n, begin + block_size);
    partial[static_cast<std::size_t>(b)] = block_fn(begin, end);
  });
  T acc = init;
  for (const T& p : partial) acc = fold(acc, p);
  return acc;
}

}  // namespace mflow
