#ifndef CONIC_NUMERICS_PARALLEL_HPP
#define CONIC_NUMERICS_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace conic::numerics {

/// Job count from CONIC_JOBS, falling back to the hardware concurrency.
inline unsigned default_jobs() {
  if (const char* env = std::getenv("CONIC_JOBS")) {
    try {
      const int jobs = std::stoi(env);
      if (jobs > 0) return static_cast<unsigned>(jobs);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count) on `jobs` workers pulling indices from a shared
/// counter. Results must be written by index, which keeps output independent of
/// scheduling. The exception of the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex guard;
  std::size_t failed_index = count;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(guard);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, count));
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace conic::numerics

#endif  // CONIC_NUMERICS_PARALLEL_HPP
