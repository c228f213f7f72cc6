#ifndef OGPSSM_PARALLEL_HPP
#define OGPSSM_PARALLEL_HPP

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ogpssm {

/// Worker cap: ONLINEGPSSM_THREADS if set, otherwise hardware concurrency.
int max_threads();

/// Runs f(0..n-1) across workers. Each index must write only to its own
/// output slot; callers combine slots in index order afterwards, so results
/// do not depend on the number of threads.
template <typename F>
void parallel_for(int n, F&& f) {
  const int workers = std::min(max_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ogpssm

#endif  // OGPSSM_PARALLEL_HPP
