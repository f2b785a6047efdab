#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace spheremap {

namespace detail {
inline std::atomic<int>& thread_budget_storage() {
  static std::atomic<int> budget{0};  // 0 = hardware concurrency
  return budget;
}
inline thread_local bool in_parallel_worker = false;
}  // namespace detail

inline void set_thread_budget(int n) { detail::thread_budget_storage().store(n); }

inline int thread_budget() {
  int n = detail::thread_budget_storage().load();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return n > 0 ? n : 1;
}

/// Runs body(i) for i in [0, n). Results must be written to per-index slots;
/// iteration order is unspecified. Nested calls from worker threads run
/// serially, and the first exception is rethrown on the caller.
template <class F>
void parallel_for(Eigen::Index n, F&& body) {
  const int budget = thread_budget();
  if (n <= 1 || budget <= 1 || detail::in_parallel_worker) {
    for (Eigen::Index i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = static_cast<int>(std::min<Eigen::Index>(budget, n));
  std::atomic<Eigen::Index> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::atomic_flag error_lock = ATOMIC_FLAG_INIT;

  auto work = [&] {
    detail::in_parallel_worker = true;
    for (;;) {
      const Eigen::Index i = next.fetch_add(1);
      if (i >= n || failed.load()) break;
      try {
        body(i);
      } catch (...) {
        if (!error_lock.test_and_set()) error = std::current_exception();
        failed.store(true);
        break;
      }
    }
    detail::in_parallel_worker = false;
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers) - 1);
  for (int t = 1; t < workers; ++t) threads.emplace_back(work);
  work();
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace spheremap
