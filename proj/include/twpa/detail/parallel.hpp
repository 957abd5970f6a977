#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace twpa::detail {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be written by index;
// the first exception (lowest index) is rethrown after all workers stop.
template <class Fn>
void parallel_for(size_t n, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<size_t>(jobs, n));
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace twpa::detail
