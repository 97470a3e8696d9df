#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "fastfem/types.hpp"

namespace fastfem {

/// Fixed-size pool of worker threads executing one fork-join loop at a time.
///
/// `parallel_for` returns only once every task has finished, so each call acts
/// as a barrier. The calling thread takes part in the loop, which means a pool
/// of size 1 owns no threads and runs tasks inline in ascending order.
class WorkerPool {
 public:
  explicit WorkerPool(int workers = 1);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return static_cast<int>(threads_.size()) + 1; }

  /// Runs `fn(task)` for every task in [0, tasks). Tasks are handed out
  /// dynamically; callers must not depend on which thread runs which task.
  void parallel_for(Index tasks, const std::function<void(Index)>& fn);

 private:
  void worker_loop();
  void drain();

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(Index)>* job_ = nullptr;
  Index job_tasks_ = 0;
  std::atomic<Index> next_{0};
  std::uint64_t generation_ = 0;
  int busy_ = 0;
  bool stop_ = false;
};

}  // namespace fastfem
