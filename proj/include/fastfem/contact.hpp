#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "fastfem/csr.hpp"
#include "fastfem/integrator.hpp"

namespace fastfem {

enum class ConstraintType { Bilateral, Unilateral };

/// Rows of J with their targets. A row's violation is p = J_i x - delta_i;
/// bilateral rows require p = 0, unilateral rows p <= 0.
struct ConstraintSet {
  CsrMatrix jacobian;  // m x 3n
  std::vector<double> delta;
  std::vector<ConstraintType> types;

  Index size() const { return jacobian.nrows; }
  std::vector<double> violation(std::span<const double> x) const;
};

/// Unilateral rows keeping the given nodes on or above the plane z = height.
ConstraintSet halfspace_constraints(std::span<const Index> nodes, Index num_dofs, double height);

/// z = A^-1 r
using InverseApply = std::function<void(std::span<const double>, std::span<double>)>;

struct Compliance {
  Eigen::MatrixXd w;  // symmetrized J A^-1 J^T
  /// Column i holds A^-1 J_i^T (length 3n each), reused for the correction.
  std::vector<std::vector<double>> columns;
};

/// W column by column; one inverse application per constraint row.
Compliance build_compliance(const CsrMatrix& jacobian, const InverseApply& solve);

struct PgsReport {
  int sweeps = 0;
  bool converged = false;
  /// sum_i |lambda_i (W lambda - rhs)_i| over unilateral rows plus
  /// sum_i |(W lambda - rhs)_i| over bilateral rows.
  double complementarity = 0.0;
  std::vector<Index> dropped;  // rows skipped for a zero diagonal
};

/// Gauss-Seidel in row order; unilateral rows are clamped to lambda >= 0
/// after their update. Stops when max |d lambda| <= tol * max |lambda| or
/// after max_sweeps.
std::vector<double> projected_gauss_seidel(const Eigen::MatrixXd& w, std::span<const double> rhs,
                                           std::span<const ConstraintType> types, double tol, int max_sweeps,
                                           PgsReport* report = nullptr);

/// Complementarity residual as reported by PgsReport.
double lcp_residual(const Eigen::MatrixXd& w, std::span<const double> lambda, std::span<const double> rhs,
                    std::span<const ConstraintType> types);

struct ContactConfig {
  bool enabled = false;
  double plane_z = 0.0;
  /// Nodes whose free position ends closer than this to the plane become constraints.
  double margin = 1e-3;
  double pgs_tolerance = 1e-13;
  int pgs_max_sweeps = 20000;
  int max_rounds = 4;

  void validate() const;
  bool operator==(const ContactConfig&) const = default;
};

struct ContactReport {
  Index active = 0;
  int rounds = 0;
  PgsReport pgs;
  double max_penetration = 0.0;  // after commit, metres below the plane (0 if none)
  bool aborted = false;
};

/// Free motion, compliance, PGS and correction for a node-versus-plane
/// contact. The system matrix of the free step is reused unchanged.
class ContactSolver {
 public:
  explicit ContactSolver(ContactConfig config);

  StepInfo step(Integrator& integrator, SimState& state, LinearSolver& solver, ContactReport* report = nullptr);

  const ContactConfig& config() const { return config_; }

 private:
  ContactConfig config_;
};

}  // namespace fastfem
