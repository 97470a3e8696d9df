#include "fastfem/contact.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>

namespace fastfem {

std::vector<double> ConstraintSet::violation(std::span<const double> x) const {
  std::vector<double> p = spmv(jacobian, x);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= delta[i];
  return p;
}

ConstraintSet halfspace_constraints(std::span<const Index> nodes, Index num_dofs, double height) {
  ConstraintSet c;
  c.jacobian.nrows = static_cast<Index>(nodes.size());
  c.jacobian.ncols = num_dofs;
  for (Index node : nodes) {
    if (node < 0 || 3 * node + 2 >= num_dofs) throw InvalidArgument("contact: node out of range");
    c.jacobian.col_ind.push_back(3 * node + 2);
    c.jacobian.values.push_back(-1.0);
    c.jacobian.row_ptr.push_back(c.jacobian.nnz());
    c.delta.push_back(-height);
    c.types.push_back(ConstraintType::Unilateral);
  }
  return c;
}

Compliance build_compliance(const CsrMatrix& jacobian, const InverseApply& solve) {
  const Index m = jacobian.nrows;
  const Index n = jacobian.ncols;
  Compliance c;
  c.w.setZero(m, m);
  c.columns.assign(m, std::vector<double>(n, 0.0));
  std::vector<double> rhs(n);
  for (Index j = 0; j < m; ++j) {
    std::fill(rhs.begin(), rhs.end(), 0.0);
    for (Index p = jacobian.row_ptr[j]; p < jacobian.row_ptr[j + 1]; ++p) rhs[jacobian.col_ind[p]] = jacobian.values[p];
    solve(rhs, c.columns[j]);
    const std::vector<double> col = spmv(jacobian, c.columns[j]);
    for (Index i = 0; i < m; ++i) c.w(i, j) = col[i];
  }
  c.w = 0.5 * (c.w + c.w.transpose()).eval();
  return c;
}

double lcp_residual(const Eigen::MatrixXd& w, std::span<const double> lambda, std::span<const double> rhs,
                    std::span<const ConstraintType> types) {
  double res = 0.0;
  for (Index i = 0; i < static_cast<Index>(rhs.size()); ++i) {
    double r = -rhs[i];
    for (Index j = 0; j < static_cast<Index>(rhs.size()); ++j) r += w(i, j) * lambda[j];
    res += types[i] == ConstraintType::Unilateral ? std::abs(lambda[i] * r) : std::abs(r);
  }
  return res;
}

std::vector<double> projected_gauss_seidel(const Eigen::MatrixXd& w, std::span<const double> rhs,
                                           std::span<const ConstraintType> types, double tol, int max_sweeps,
                                           PgsReport* report) {
  const Index m = static_cast<Index>(rhs.size());
  if (w.rows() != m || w.cols() != m || static_cast<Index>(types.size()) != m)
    throw InvalidArgument("pgs: dimension mismatch");
  PgsReport local;
  PgsReport& rep = report ? *report : local;
  rep = PgsReport{};
  std::vector<double> lambda(m, 0.0);
  std::vector<char> active(m, 1);
  for (Index i = 0; i < m; ++i) {
    if (w(i, i) <= 0.0) {
      active[i] = 0;
      rep.dropped.push_back(i);
      std::cerr << "contact: constraint " << i << " dropped (zero compliance diagonal)\n";
    }
  }
  if (m == 0) rep.converged = true;
  for (int sweep = 0; sweep < max_sweeps && m > 0; ++sweep) {
    double max_delta = 0.0;
    double max_lambda = 0.0;
    for (Index i = 0; i < m; ++i) {
      if (!active[i]) continue;
      double r = rhs[i];
      for (Index j = 0; j < m; ++j) r -= w(i, j) * lambda[j];
      double next = lambda[i] + r / w(i, i);
      if (types[i] == ConstraintType::Unilateral) next = std::max(next, 0.0);
      max_delta = std::max(max_delta, std::abs(next - lambda[i]));
      lambda[i] = next;
      max_lambda = std::max(max_lambda, std::abs(next));
    }
    rep.sweeps = sweep + 1;
    if (max_delta <= tol * max_lambda || max_delta == 0.0) {
      rep.converged = true;
      break;
    }
  }
  rep.complementarity = lcp_residual(w, lambda, rhs, types);
  return lambda;
}

void ContactConfig::validate() const {
  if (!std::isfinite(plane_z)) throw InvalidArgument("contact.plane_z must be finite");
  if (!(margin >= 0.0)) throw InvalidArgument("contact.margin must be >= 0");
  if (!(pgs_tolerance > 0.0) || pgs_max_sweeps < 1 || max_rounds < 1)
    throw InvalidArgument("contact: invalid PGS settings");
}

ContactSolver::ContactSolver(ContactConfig config) : config_(config) { config_.validate(); }

StepInfo ContactSolver::step(Integrator& integrator, SimState& state, LinearSolver& solver, ContactReport* report) {
  ContactReport local;
  ContactReport& rep = report ? *report : local;
  rep = ContactReport{};
  StepInfo info;
  std::vector<double> a_free = integrator.free_acceleration(state, solver, &info);
  if (!config_.enabled) {
    integrator.commit(state, a_free);
    return info;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const double h = integrator.config().h;
  const Index n = static_cast<Index>(state.x.size());
  const Index nodes = n / 3;
  std::vector<char> fixed(nodes, 0);
  for (Index node : integrator.model().mesh().fixed_nodes()) fixed[node] = 1;

  auto end_z = [&](std::span<const double> acc, Index node) {
    const Index d = 3 * node + 2;
    return state.x[d] + h * (state.v[d] + h * acc[d]);
  };

  std::vector<char> candidate(nodes, 0);
  for (Index k = 0; k < nodes; ++k)
    if (!fixed[k] && end_z(a_free, k) < config_.plane_z + config_.margin) candidate[k] = 1;

  const CsrMatrix& a = integrator.assembler().matrix();
  InverseApply inverse = [&](std::span<const double> r, std::span<double> z) {
    std::fill(z.begin(), z.end(), 0.0);
    SolveReport s = solver.solve(a, r, z);
    if (!s.converged) throw StepError("contact: compliance solve did not converge", s.final_residual);
  };

  std::vector<double> acc = a_free;
  for (int round = 0; round < config_.max_rounds; ++round) {
    rep.rounds = round + 1;
    std::vector<Index> active;
    for (Index k = 0; k < nodes; ++k)
      if (candidate[k]) active.push_back(k);
    rep.active = static_cast<Index>(active.size());
    acc = a_free;
    if (!active.empty()) {
      ConstraintSet cs = halfspace_constraints(active, n, config_.plane_z);
      std::vector<double> x_free(n);
      for (Index d = 0; d < n; ++d) x_free[d] = state.x[d] + h * (state.v[d] + h * a_free[d]);
      std::vector<double> rhs = cs.violation(x_free);
      for (double& r : rhs) r /= h * h;
      Compliance comp;
      try {
        comp = build_compliance(cs.jacobian, inverse);
      } catch (const StepError& e) {
        std::cerr << e.what() << "; committing free motion\n";
        rep.aborted = true;
        break;
      }
      std::vector<double> lambda =
          projected_gauss_seidel(comp.w, rhs, cs.types, config_.pgs_tolerance, config_.pgs_max_sweeps, &rep.pgs);
      for (Index i = 0; i < cs.size(); ++i) {
        if (lambda[i] == 0.0) continue;
        for (Index d = 0; d < n; ++d) acc[d] -= lambda[i] * comp.columns[i][d];
      }
    }
    bool added = false;
    for (Index k = 0; k < nodes; ++k) {
      if (!fixed[k] && !candidate[k] && end_z(acc, k) < config_.plane_z) {
        candidate[k] = 1;
        added = true;
      }
    }
    if (!added) break;
  }

  integrator.commit(state, acc);
  for (Index k = 0; k < nodes; ++k)
    rep.max_penetration = std::max(rep.max_penetration, config_.plane_z - state.x[3 * k + 2]);
  info.solve_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return info;
}

}  // namespace fastfem
