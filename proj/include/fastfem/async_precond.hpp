#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "fastfem/krylov.hpp"
#include "fastfem/ldlt.hpp"
#include "fastfem/triangular.hpp"

namespace fastfem {

enum class PrecondStatus { Empty, Factorizing, Ready, Disabled };
enum class RefactorPolicy { OnCompletion, EveryK };

std::string to_string(PrecondStatus status);
std::string to_string(RefactorPolicy policy);
RefactorPolicy parse_refactor_policy(const std::string& name);

struct AsyncPrecondConfig {
  bool enabled = true;
  Index leaf_threshold = 64;
  Index tile = 16;
  RefactorPolicy policy = RefactorPolicy::OnCompletion;
  int every_k = 3;
  /// Factor on the calling thread inside update(); results then depend only
  /// on the inputs, never on thread timing.
  bool synchronous = false;
  /// Nice increment applied to the factorization thread (Linux only).
  int worker_nice = 5;

  void validate() const;
  bool operator==(const AsyncPrecondConfig&) const = default;
};

/// LDL^T preconditioner refreshed by a dedicated background thread.
///
/// The simulation calls update() once per step with the freshly assembled
/// matrix. Finished factors are only swapped in there, so the factors seen by
/// apply() stay fixed for the whole step. The worker receives a value copy of
/// the matrix and never touches simulation memory.
class AsyncLdltPreconditioner final : public Preconditioner {
 public:
  AsyncLdltPreconditioner(AsyncPrecondConfig config, WorkerPool& pool);
  ~AsyncLdltPreconditioner() override;
  AsyncLdltPreconditioner(const AsyncLdltPreconditioner&) = delete;
  AsyncLdltPreconditioner& operator=(const AsyncLdltPreconditioner&) = delete;

  /// Step boundary: publish finished factors, then submit `a` if the policy
  /// asks for a new factorization and none is running.
  void update(const CsrMatrix& a, long step);

  /// Blocks until the running factorization (if any) is done and swaps it in.
  void wait();

  PrecondStatus status() const;
  bool ready() const { return solver_ != nullptr; }
  bool in_flight() const;
  /// Steps since the matrix behind the current factors was assembled; -1 without factors.
  long staleness() const { return solver_ ? current_step_ - solver_->factors().source_step : -1; }
  long current_step() const { return current_step_; }
  int completed() const { return completed_; }
  const std::string& last_error() const { return last_error_; }
  const AsyncPrecondConfig& config() const { return config_; }
  std::shared_ptr<const LevelScheduledSolver> solver() const { return solver_; }

  /// Throws std::logic_error unless ready().
  void apply(std::span<const double> r, std::span<double> z) const override;

 private:
  struct Job {
    CsrMatrix matrix;
    long step = 0;
  };
  struct Result {
    std::shared_ptr<const LevelScheduledSolver> solver;
    std::string error;
  };

  void worker_loop();
  Result factor(const Job& job);
  void publish(Result result);
  bool try_collect();
  void submit(const CsrMatrix& a, long step);

  AsyncPrecondConfig config_;
  WorkerPool& pool_;
  LdltFactorizer factorizer_;
  std::shared_ptr<const LevelScheduledSolver> solver_;
  long current_step_ = 0;
  long last_submit_ = -1;
  int completed_ = 0;
  bool disabled_ = false;
  std::string last_error_;

  std::thread thread_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::optional<Job> job_;
  std::optional<Result> result_;
  bool busy_ = false;
  bool stop_ = false;
};

}  // namespace fastfem
