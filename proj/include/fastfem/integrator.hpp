#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "fastfem/assembly.hpp"
#include "fastfem/async_precond.hpp"
#include "fastfem/krylov.hpp"
#include "fastfem/models.hpp"

namespace fastfem {

struct SimState {
  std::vector<double> x;
  std::vector<double> v;
  std::vector<double> a;
  std::vector<double> f_int;
  std::vector<double> f_ext;
  double t = 0.0;
  long step = 0;  // number of committed steps
};

struct IntegratorConfig {
  double h = 0.01;
  double alpha = 0.0;  // Rayleigh mass coefficient
  double beta = 0.0;   // Rayleigh stiffness coefficient
  Vec3 gravity{0.0, 0.0, -9.81};
  int newton_iterations = 1;

  void validate() const;
  bool operator==(const IntegratorConfig&) const = default;
};

struct PointLoad {
  Index node = 0;
  Vec3 force{0.0, 0.0, 0.0};
  bool operator==(const PointLoad&) const = default;
};

/// Raised when the linear solve of a step does not converge.
class StepError : public std::runtime_error {
 public:
  StepError(const std::string& what, double residual) : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Solves A a = b in the configured mode. In PCG-LDLT mode the factors come
/// from the asynchronous preconditioner; until they are available, or after
/// a failed factorization, Jacobi is used instead.
class LinearSolver {
 public:
  LinearSolver(SolverConfig config, AsyncPrecondConfig precond, WorkerPool& pool);

  /// Step boundary hook: hands the new matrix to the preconditioner.
  void prepare(const CsrMatrix& a, long step);
  SolveReport solve(const CsrMatrix& a, std::span<const double> b, std::span<double> x) const;

  const SolverConfig& config() const { return config_; }
  SolverConfig& config() { return config_; }
  /// Null unless the mode is PCG-LDLT with the preconditioner enabled.
  AsyncLdltPreconditioner* precond() { return precond_.get(); }
  const AsyncLdltPreconditioner* precond() const { return precond_.get(); }
  PrecondStatus precond_status() const;
  long staleness() const { return precond_ ? precond_->staleness() : -1; }
  WorkerPool& pool() const { return pool_; }

 private:
  SolverConfig config_;
  WorkerPool& pool_;
  std::unique_ptr<AsyncLdltPreconditioner> precond_;
  std::unique_ptr<JacobiPreconditioner> jacobi_;
};

struct StepInfo {
  double assembly_ms = 0.0;
  double solve_ms = 0.0;
  bool pattern_rebuilt = false;
  SolveReport solve;
  PrecondStatus precond_status = PrecondStatus::Empty;
  long staleness = -1;
};

/// Backward Euler with the linearization taken at the start of the step:
///   [(1 + h alpha) M + h (h + beta) K] a = f_ext - f - (h + beta) K v - alpha M v
///   v += h a,  x += h v.
/// Fixed DOFs get a unit row in A and a zero right-hand side, so their
/// acceleration is zero and their position never changes.
class Integrator {
 public:
  Integrator(const ForceModel& model, IntegratorConfig config, WorkerPool* pool = nullptr);

  SimState initial_state() const;
  void set_point_loads(std::vector<PointLoad> loads);

  /// One fused collection pass over mass and stiffness. Returns A (owned by
  /// the assembler) and fills b. Also stores f_int and f_ext in `state`.
  const CsrMatrix& assemble_system(SimState& state, std::vector<double>& b);

  /// Assembles, solves and returns the accelerations without committing them.
  /// A stays available through assembler().matrix().
  std::vector<double> free_acceleration(SimState& state, LinearSolver& solver, StepInfo* info = nullptr);

  /// v += h a, x += h v, t += h, step += 1.
  void commit(SimState& state, std::span<const double> a) const;

  /// Full step: the first iteration is the linearized step above; further
  /// Newton iterations (config.newton_iterations > 1) re-evaluate the
  /// backward Euler residual at the updated end-of-step state.
  StepInfo step(SimState& state, LinearSolver& solver);

  const IntegratorConfig& config() const { return config_; }
  const ForceModel& model() const { return model_; }
  Assembler& assembler() { return assembler_; }
  const Assembler& assembler() const { return assembler_; }
  const std::vector<double>& mass() const { return mass_; }
  const std::vector<Index>& fixed_dofs() const { return fixed_; }

 private:
  void external_forces(std::span<double> f_ext) const;
  void newton_correction(SimState& state, std::span<double> a, LinearSolver& solver, StepInfo& info);

  const ForceModel& model_;
  IntegratorConfig config_;
  Assembler assembler_;
  std::vector<Index> fixed_;
  std::vector<char> is_fixed_;
  std::vector<double> mass_;
  std::vector<PointLoad> loads_;
  std::vector<double> coeffs_;
  Index mass_triplets_ = 0;
};

}  // namespace fastfem
