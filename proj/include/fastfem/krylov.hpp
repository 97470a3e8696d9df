#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fastfem/csr.hpp"
#include "fastfem/worker_pool.hpp"

namespace fastfem {

enum class SolverMode { CG, PcgJacobi, PcgLdlt };

std::string to_string(SolverMode mode);
SolverMode parse_solver_mode(const std::string& name);

struct SolverConfig {
  double tolerance = 1e-9;  // on ||r||_2 / ||b||_2
  int max_iterations = 1000;
  SolverMode mode = SolverMode::PcgLdlt;

  void validate() const;
  bool operator==(const SolverConfig&) const = default;
};

struct SolveReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  double wall_time = 0.0;  // seconds
};

class Preconditioner {
 public:
  virtual ~Preconditioner() = default;
  /// z = P^-1 r
  virtual void apply(std::span<const double> r, std::span<double> z) const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
 public:
  void apply(std::span<const double> r, std::span<double> z) const override;
};

class JacobiPreconditioner final : public Preconditioner {
 public:
  /// Throws NumericalError on a missing or zero diagonal entry.
  explicit JacobiPreconditioner(const CsrMatrix& a);
  void apply(std::span<const double> r, std::span<double> z) const override;

 private:
  std::vector<double> inv_diag_;
};

JacobiPreconditioner jacobi_precond(const CsrMatrix& a);

/// Called after every iteration with the iteration count and current iterate.
using IterationObserver = std::function<void(int, std::span<const double>)>;

/// y = A x. Rows are split into contiguous chunks when a pool is given; every
/// row sums in ascending column order, so the result does not depend on the
/// worker count.
void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y, WorkerPool* pool = nullptr);
std::vector<double> spmv(const CsrMatrix& a, std::span<const double> x, WorkerPool* pool = nullptr);

/// Sequential left-to-right dot product.
double dot(std::span<const double> a, std::span<const double> b);

/// Conjugate gradient from a zero initial guess.
SolveReport cg(const CsrMatrix& a, std::span<const double> b, std::span<double> x, const SolverConfig& config,
               WorkerPool* pool = nullptr, const IterationObserver& observer = {});

/// Preconditioned conjugate gradient from a zero initial guess. The only
/// per-iteration quantity inspected for convergence is the scalar ||r||_2.
SolveReport pcg(const CsrMatrix& a, std::span<const double> b, const Preconditioner& precond, std::span<double> x,
                const SolverConfig& config, WorkerPool* pool = nullptr, const IterationObserver& observer = {});

}  // namespace fastfem
