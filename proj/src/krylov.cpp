#include "fastfem/krylov.hpp"

#include <chrono>
#include <cmath>

namespace fastfem {

std::string to_string(SolverMode mode) {
  switch (mode) {
    case SolverMode::CG: return "cg";
    case SolverMode::PcgJacobi: return "pcg-jacobi";
    case SolverMode::PcgLdlt: return "pcg-ldlt";
  }
  return "cg";
}

SolverMode parse_solver_mode(const std::string& name) {
  if (name == "cg") return SolverMode::CG;
  if (name == "pcg-jacobi") return SolverMode::PcgJacobi;
  if (name == "pcg-ldlt") return SolverMode::PcgLdlt;
  throw InvalidArgument("solver.mode: unknown mode '" + name + "' (expected cg, pcg-jacobi or pcg-ldlt)");
}

void SolverConfig::validate() const {
  if (!(tolerance > 0.0)) throw InvalidArgument("solver.tolerance must be > 0");
  if (max_iterations < 1) throw InvalidArgument("solver.max_iterations must be >= 1");
}

void IdentityPreconditioner::apply(std::span<const double> r, std::span<double> z) const {
  std::copy(r.begin(), r.end(), z.begin());
}

JacobiPreconditioner::JacobiPreconditioner(const CsrMatrix& a) : inv_diag_(a.nrows) {
  for (Index i = 0; i < a.nrows; ++i) {
    const double d = a.at(i, i);
    if (d == 0.0) throw NumericalError("jacobi: zero diagonal entry at row " + std::to_string(i));
    inv_diag_[i] = 1.0 / d;
  }
}

void JacobiPreconditioner::apply(std::span<const double> r, std::span<double> z) const {
  for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] * inv_diag_[i];
}

JacobiPreconditioner jacobi_precond(const CsrMatrix& a) { return JacobiPreconditioner(a); }

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y, WorkerPool* pool) {
  if (static_cast<Index>(x.size()) != a.ncols || static_cast<Index>(y.size()) != a.nrows)
    throw InvalidArgument("spmv: dimension mismatch");
  auto rows = [&](Index begin, Index end) {
    for (Index r = begin; r < end; ++r) {
      double sum = 0.0;
      for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) sum += a.values[k] * x[a.col_ind[k]];
      y[r] = sum;
    }
  };
  if (pool == nullptr || pool->size() == 1) {
    rows(0, a.nrows);
    return;
  }
  const Index chunks = std::min<Index>(pool->size(), std::max<Index>(a.nrows, 1));
  pool->parallel_for(chunks, [&](Index c) {
    rows(static_cast<Index>(static_cast<long long>(a.nrows) * c / chunks),
         static_cast<Index>(static_cast<long long>(a.nrows) * (c + 1) / chunks));
  });
}

std::vector<double> spmv(const CsrMatrix& a, std::span<const double> x, WorkerPool* pool) {
  std::vector<double> y(a.nrows);
  spmv(a, x, y, pool);
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

namespace {

using Clock = std::chrono::steady_clock;

void check_system(const CsrMatrix& a, std::span<const double> b, std::span<double> x) {
  if (a.nrows != a.ncols) throw InvalidArgument("solver: matrix must be square");
  if (static_cast<Index>(b.size()) != a.nrows || static_cast<Index>(x.size()) != a.nrows)
    throw InvalidArgument("solver: vector length does not match the matrix");
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

SolveReport cg(const CsrMatrix& a, std::span<const double> b, std::span<double> x, const SolverConfig& config,
               WorkerPool* pool, const IterationObserver& observer) {
  config.validate();
  check_system(a, b, x);
  const auto start = Clock::now();
  const std::size_t n = b.size();
  std::fill(x.begin(), x.end(), 0.0);

  SolveReport report;
  const double b_norm = std::sqrt(dot(b, b));
  if (b_norm == 0.0) {
    report.converged = true;
    report.wall_time = seconds_since(start);
    return report;
  }
  std::vector<double> r(b.begin(), b.end());
  std::vector<double> p(r);
  std::vector<double> ap(n);
  double rr = dot(r, r);
  report.final_residual = std::sqrt(rr) / b_norm;

  while (report.iterations < config.max_iterations) {
    spmv(a, p, ap, pool);
    const double p_ap = dot(p, ap);
    if (!(p_ap > 0.0)) break;  // breakdown: A not SPD along p
    const double alpha = rr / p_ap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    ++report.iterations;
    const double rr_next = dot(r, r);
    report.final_residual = std::sqrt(rr_next) / b_norm;
    if (observer) observer(report.iterations, x);
    if (report.final_residual <= config.tolerance) {
      report.converged = true;
      break;
    }
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  report.wall_time = seconds_since(start);
  return report;
}

SolveReport pcg(const CsrMatrix& a, std::span<const double> b, const Preconditioner& precond, std::span<double> x,
                const SolverConfig& config, WorkerPool* pool, const IterationObserver& observer) {
  config.validate();
  check_system(a, b, x);
  const auto start = Clock::now();
  const std::size_t n = b.size();
  std::fill(x.begin(), x.end(), 0.0);

  SolveReport report;
  const double b_norm = std::sqrt(dot(b, b));
  if (b_norm == 0.0) {
    report.converged = true;
    report.wall_time = seconds_since(start);
    return report;
  }
  std::vector<double> r(b.begin(), b.end());
  std::vector<double> z(n);
  std::vector<double> ap(n);
  precond.apply(r, z);
  std::vector<double> p(z);
  double rz = dot(r, z);
  report.final_residual = 1.0;

  while (report.iterations < config.max_iterations) {
    spmv(a, p, ap, pool);
    const double p_ap = dot(p, ap);
    if (!(p_ap > 0.0)) break;
    const double alpha = rz / p_ap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    ++report.iterations;
    report.final_residual = std::sqrt(dot(r, r)) / b_norm;
    if (observer) observer(report.iterations, x);
    if (report.final_residual <= config.tolerance) {
      report.converged = true;
      break;
    }
    precond.apply(r, z);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  report.wall_time = seconds_since(start);
  return report;
}

}  // namespace fastfem
