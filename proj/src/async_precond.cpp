#include "fastfem/async_precond.hpp"

#include <iostream>
#include <stdexcept>

#ifdef __linux__
#include <sys/resource.h>
#include <sys/syscall.h>
#include <unistd.h>
#endif

namespace fastfem {

std::string to_string(PrecondStatus status) {
  switch (status) {
    case PrecondStatus::Empty: return "empty";
    case PrecondStatus::Factorizing: return "factorizing";
    case PrecondStatus::Ready: return "ready";
    case PrecondStatus::Disabled: return "disabled";
  }
  return "?";
}

std::string to_string(RefactorPolicy policy) {
  return policy == RefactorPolicy::OnCompletion ? "on-completion" : "every-k";
}

RefactorPolicy parse_refactor_policy(const std::string& name) {
  if (name == "on-completion") return RefactorPolicy::OnCompletion;
  if (name == "every-k") return RefactorPolicy::EveryK;
  throw InvalidArgument("precond.policy: unknown policy '" + name + "' (expected on-completion or every-k)");
}

void AsyncPrecondConfig::validate() const {
  if (leaf_threshold < 1) throw InvalidArgument("precond.leaf_threshold must be >= 1");
  if (tile < 1) throw InvalidArgument("precond.tile_t must be >= 1");
  if (every_k < 1) throw InvalidArgument("precond.every_k must be >= 1");
}

AsyncLdltPreconditioner::AsyncLdltPreconditioner(AsyncPrecondConfig config, WorkerPool& pool)
    : config_(config), pool_(pool), factorizer_(config.leaf_threshold, 3) {
  config_.validate();
  if (config_.enabled && !config_.synchronous) thread_ = std::thread([this] { worker_loop(); });
}

AsyncLdltPreconditioner::~AsyncLdltPreconditioner() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

PrecondStatus AsyncLdltPreconditioner::status() const {
  if (disabled_) return PrecondStatus::Disabled;
  if (solver_) return PrecondStatus::Ready;
  return in_flight() ? PrecondStatus::Factorizing : PrecondStatus::Empty;
}

bool AsyncLdltPreconditioner::in_flight() const {
  std::lock_guard lock(mutex_);
  return busy_ || job_.has_value() || result_.has_value();
}

AsyncLdltPreconditioner::Result AsyncLdltPreconditioner::factor(const Job& job) {
  Result out;
  try {
    auto factors = std::make_shared<LdltFactors>(factorizer_.factor(job.matrix));
    factors->source_step = job.step;
    out.solver = std::make_shared<const LevelScheduledSolver>(std::move(factors), config_.tile);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

void AsyncLdltPreconditioner::worker_loop() {
#ifdef __linux__
  if (config_.worker_nice != 0)
    setpriority(PRIO_PROCESS, static_cast<id_t>(syscall(SYS_gettid)), config_.worker_nice);
#endif
  std::unique_lock lock(mutex_);
  for (;;) {
    cv_.wait(lock, [this] { return stop_ || job_.has_value(); });
    if (stop_) return;
    Job job = std::move(*job_);
    job_.reset();
    busy_ = true;
    lock.unlock();
    Result r = factor(job);
    lock.lock();
    busy_ = false;
    result_ = std::move(r);
    cv_.notify_all();
  }
}

void AsyncLdltPreconditioner::publish(Result result) {
  if (!result.error.empty()) {
    disabled_ = true;
    last_error_ = result.error;
    solver_.reset();
    std::cerr << "ndprecond: factorization failed, falling back to Jacobi: " << result.error << "\n";
    return;
  }
  solver_ = std::move(result.solver);
  ++completed_;
}

bool AsyncLdltPreconditioner::try_collect() {
  std::optional<Result> r;
  {
    std::lock_guard lock(mutex_);
    r.swap(result_);
  }
  if (!r) return false;
  publish(std::move(*r));
  return true;
}

void AsyncLdltPreconditioner::submit(const CsrMatrix& a, long step) {
  last_submit_ = step;
  if (config_.synchronous) {
    publish(factor(Job{a, step}));
    return;
  }
  {
    std::lock_guard lock(mutex_);
    job_ = Job{a, step};
  }
  cv_.notify_all();
}

void AsyncLdltPreconditioner::update(const CsrMatrix& a, long step) {
  current_step_ = step;
  if (!config_.enabled || disabled_) return;
  try_collect();
  if (disabled_ || in_flight()) return;
  const bool fire = config_.policy == RefactorPolicy::OnCompletion || last_submit_ < 0 ||
                    step - last_submit_ >= config_.every_k;
  if (fire) submit(a, step);
}

void AsyncLdltPreconditioner::wait() {
  if (thread_.joinable()) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return !busy_ && !job_.has_value(); });
  }
  try_collect();
}

void AsyncLdltPreconditioner::apply(std::span<const double> r, std::span<double> z) const {
  if (!solver_) throw std::logic_error("ndprecond: apply() called while the preconditioner is not ready");
  solver_->apply(r, z, pool_);
}

}  // namespace fastfem
