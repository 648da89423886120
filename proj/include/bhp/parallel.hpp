#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bhp {

/// Evaluates fn(i) for i in [0, count) on `workers` threads and returns the
/// results in index order. Replica i must derive its randomness from i alone;
/// the output is then independent of the worker count.
template <class Fn>
auto parallel_replicas(std::size_t count, unsigned workers, Fn&& fn) {
  using Result = decltype(fn(std::size_t{}));
  std::vector<Result> results(count);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = fn(i);
    return results;
  }
  std::exception_ptr failure;
  std::mutex failure_lock;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) results[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(failure_lock);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace bhp
