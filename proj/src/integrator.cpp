#include "fastfem/integrator.hpp"

#include <chrono>
#include <cmath>

namespace fastfem {

namespace {

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void IntegratorConfig::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("integrator.h must be > 0");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvalidArgument("integrator.alpha and integrator.beta must be >= 0");
  for (double g : gravity)
    if (!std::isfinite(g)) throw InvalidArgument("integrator.gravity must be finite");
  if (newton_iterations < 1) throw InvalidArgument("integrator.newton_iterations must be >= 1");
}

LinearSolver::LinearSolver(SolverConfig config, AsyncPrecondConfig precond, WorkerPool& pool)
    : config_(config), pool_(pool) {
  config_.validate();
  if (config_.mode == SolverMode::PcgLdlt && precond.enabled)
    precond_ = std::make_unique<AsyncLdltPreconditioner>(precond, pool);
}

void LinearSolver::prepare(const CsrMatrix& a, long step) {
  if (config_.mode == SolverMode::CG) return;
  if (precond_) precond_->update(a, step);
  if (!precond_ || !precond_->ready()) jacobi_ = std::make_unique<JacobiPreconditioner>(a);
}

PrecondStatus LinearSolver::precond_status() const {
  if (precond_) return precond_->status();
  return config_.mode == SolverMode::PcgLdlt ? PrecondStatus::Disabled : PrecondStatus::Empty;
}

SolveReport LinearSolver::solve(const CsrMatrix& a, std::span<const double> b, std::span<double> x) const {
  if (config_.mode == SolverMode::CG) return cg(a, b, x, config_, &pool_);
  if (precond_ && precond_->ready()) return pcg(a, b, *precond_, x, config_, &pool_);
  if (!jacobi_) throw std::logic_error("krylov: solve() before prepare()");
  return pcg(a, b, *jacobi_, x, config_, &pool_);
}

Integrator::Integrator(const ForceModel& model, IntegratorConfig config, WorkerPool* pool)
    : model_(model),
      config_(config),
      assembler_(model.mesh().num_dofs(), model.mesh().fixed_dofs(), pool),
      fixed_(model.mesh().fixed_dofs()),
      is_fixed_(model.mesh().num_dofs(), 0),
      mass_(lumped_mass_vector(model.mesh(), model.params(), model.precomp())) {
  config_.validate();
  for (Index d : fixed_) is_fixed_[d] = 1;
  mass_triplets_ = 12 * model.mesh().num_elements();
}

SimState Integrator::initial_state() const {
  const Index n = model_.mesh().num_dofs();
  SimState s;
  s.x = rest_positions(model_.mesh());
  s.v.assign(n, 0.0);
  s.a.assign(n, 0.0);
  s.f_int.assign(n, 0.0);
  s.f_ext.assign(n, 0.0);
  return s;
}

void Integrator::set_point_loads(std::vector<PointLoad> loads) {
  for (const auto& l : loads)
    if (l.node < 0 || l.node >= model_.mesh().num_nodes()) throw InvalidArgument("point load on a missing node");
  loads_ = std::move(loads);
}

void Integrator::external_forces(std::span<double> f_ext) const {
  const Index n = static_cast<Index>(f_ext.size());
  for (Index d = 0; d < n; ++d) f_ext[d] = mass_[d] * config_.gravity[d % 3];
  for (const auto& l : loads_)
    for (int c = 0; c < 3; ++c) f_ext[3 * l.node + c] += l.force[c];
}

namespace {

// One fused pass: lumped mass triplets first, then element stiffness.
// Returns the internal forces and fills kv = K v.
struct FusedPass {
  const ForceModel& model;
  Assembler& assembler;
  std::vector<double>& coeffs;
  Index mass_triplets;
  double cm;
  double ck;

  std::vector<double> run(std::span<const double> x, std::span<const double> v, std::span<double> kv) {
    std::fill(kv.begin(), kv.end(), 0.0);
    TripletStream& s = assembler.begin();
    lumped_mass(model.mesh(), model.params(), model.precomp(), s);
    std::vector<double> f = model.evaluate(x, &s, v, kv);
    if (static_cast<Index>(coeffs.size()) != s.cursor() || (!coeffs.empty() && (coeffs.front() != cm || coeffs.back() != ck))) {
      coeffs.assign(s.cursor(), ck);
      std::fill(coeffs.begin(), coeffs.begin() + mass_triplets, cm);
    }
    assembler.finish(coeffs);
    return f;
  }
};

}  // namespace

const CsrMatrix& Integrator::assemble_system(SimState& state, std::vector<double>& b) {
  const Index n = model_.mesh().num_dofs();
  const double h = config_.h;
  const double cm = 1.0 + h * config_.alpha;
  const double ck = h * (h + config_.beta);
  std::vector<double> kv(n);
  FusedPass pass{model_, assembler_, coeffs_, mass_triplets_, cm, ck};
  state.f_int = pass.run(state.x, state.v, kv);
  state.f_ext.resize(n);
  external_forces(state.f_ext);
  b.resize(n);
  for (Index d = 0; d < n; ++d)
    b[d] = is_fixed_[d] ? 0.0
                        : state.f_ext[d] - state.f_int[d] - (h + config_.beta) * kv[d] -
                              config_.alpha * mass_[d] * state.v[d];
  return assembler_.matrix();
}

std::vector<double> Integrator::free_acceleration(SimState& state, LinearSolver& solver, StepInfo* info) {
  StepInfo local;
  StepInfo& out = info ? *info : local;
  auto t0 = std::chrono::steady_clock::now();
  std::vector<double> b;
  const CsrMatrix& a = assemble_system(state, b);
  out.assembly_ms = ms_since(t0);
  out.pattern_rebuilt = assembler_.last_rebuilt();

  t0 = std::chrono::steady_clock::now();
  solver.prepare(a, state.step + 1);
  std::vector<double> acc(b.size(), 0.0);
  out.solve = solver.solve(a, b, acc);
  out.precond_status = solver.precond_status();
  out.staleness = solver.staleness();
  if (!out.solve.converged)
    throw StepError("krylov: solve did not converge (relative residual " + std::to_string(out.solve.final_residual) + ")",
                    out.solve.final_residual);
  if (config_.newton_iterations > 1) newton_correction(state, acc, solver, out);
  out.solve_ms = ms_since(t0);
  return acc;
}

void Integrator::newton_correction(SimState& state, std::span<double> acc, LinearSolver& solver, StepInfo& info) {
  const Index n = model_.mesh().num_dofs();
  const double h = config_.h;
  FusedPass pass{model_, assembler_, coeffs_, mass_triplets_, 1.0 + h * config_.alpha, h * (h + config_.beta)};
  std::vector<double> xe(n), ve(n), kv(n), b(n), delta(n);
  for (int it = 1; it < config_.newton_iterations; ++it) {
    for (Index d = 0; d < n; ++d) {
      ve[d] = state.v[d] + h * acc[d];
      xe[d] = state.x[d] + h * ve[d];
    }
    std::vector<double> f = pass.run(xe, ve, kv);
    for (Index d = 0; d < n; ++d)
      b[d] = is_fixed_[d] ? 0.0
                          : state.f_ext[d] - f[d] - config_.beta * kv[d] - config_.alpha * mass_[d] * ve[d] -
                                mass_[d] * acc[d];
    std::fill(delta.begin(), delta.end(), 0.0);
    SolveReport r = solver.solve(assembler_.matrix(), b, delta);
    info.solve.iterations += r.iterations;
    info.solve.wall_time += r.wall_time;
    if (!r.converged)
      throw StepError("krylov: Newton correction did not converge (relative residual " +
                          std::to_string(r.final_residual) + ")",
                      r.final_residual);
    for (Index d = 0; d < n; ++d) acc[d] += delta[d];
  }
}

void Integrator::commit(SimState& state, std::span<const double> a) const {
  const double h = config_.h;
  state.a.assign(a.begin(), a.end());
  for (std::size_t d = 0; d < state.x.size(); ++d) {
    if (is_fixed_[d]) {
      state.a[d] = 0.0;
      continue;
    }
    state.v[d] += h * a[d];
    state.x[d] += h * state.v[d];
  }
  state.t += h;
  ++state.step;
}

StepInfo Integrator::step(SimState& state, LinearSolver& solver) {
  StepInfo info;
  std::vector<double> acc = free_acceleration(state, solver, &info);
  commit(state, acc);
  return info;
}

}  // namespace fastfem
