#include <chrono>
#include <random>
#include <thread>

#include "doctest.h"
#include "fastfem/async_precond.hpp"
#include "fastfem/dissection.hpp"
#include "fastfem/ldlt.hpp"
#include "fastfem/models.hpp"
#include "fastfem/triangular.hpp"
#include "oracles.hpp"

using namespace fastfem;

namespace {

Graph grid_graph(Index k) {
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      if (i + 1 < k) edges.emplace_back(i * k + j, (i + 1) * k + j);
      if (j + 1 < k) edges.emplace_back(i * k + j, i * k + j + 1);
    }
  return Graph::from_edges(k * k, edges);
}

CsrMatrix graph_laplacian(const Graph& g, double shift) {
  CsrMatrix a;
  a.nrows = a.ncols = g.num_vertices();
  for (Index v = 0; v < g.num_vertices(); ++v) {
    std::vector<std::pair<Index, double>> row{{v, g.degree(v) + shift}};
    for (const Index* u = g.begin(v); u != g.end(v); ++u) row.emplace_back(*u, -1.0);
    std::sort(row.begin(), row.end());
    for (auto [c, val] : row) {
      a.col_ind.push_back(c);
      a.values.push_back(val);
    }
    a.row_ptr.push_back(a.nnz());
  }
  return a;
}

CsrMatrix beam_matrix(Index nx, Index ny, Index nz, double h = 0.01) {
  Mesh m = generate_beam(nx, ny, nz, 0.02);
  m.set_fixed_nodes(beam_face_nodes(nx, ny, nz, 0, false));
  MaterialParams p;
  auto model = make_force_model(MaterialLaw::Corotational, m, p);
  Assembler asmb(m.num_dofs(), m.fixed_dofs());
  TripletStream& s = asmb.begin();
  lumped_mass(m, p, model->precomp(), s);
  const Index nm = s.cursor();
  model->evaluate(rest_positions(m), &s, {}, {});
  std::vector<double> coeffs(s.cursor(), h * h);
  std::fill(coeffs.begin(), coeffs.begin() + nm, 1.0);
  return asmb.finish(coeffs);
}

bool is_permutation(const std::vector<Index>& p) {
  std::vector<Index> s = p;
  std::sort(s.begin(), s.end());
  for (Index i = 0; i < static_cast<Index>(s.size()); ++i)
    if (s[i] != i) return false;
  return true;
}

}  // namespace

TEST_CASE("dissection of a path") {
  Graph g = Graph::from_edges(3, {{0, 1}, {1, 2}});
  DissectionPlan plan = nested_dissection(g, 1);
  CHECK(plan.perm == std::vector<Index>{0, 2, 1});
  const DissectionBlock& root = plan.blocks[plan.root];
  CHECK(root.kind == BlockKind::Separator);
  CHECK(root.begin == 2);
  CHECK(root.size() == 1);
  CHECK(root.children.size() == 2);
  CHECK(root.level == 1);
  CHECK(plan.num_levels() == 2);
}

TEST_CASE("small graph stays a leaf") {
  Graph k4 = Graph::from_edges(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  DissectionPlan plan = nested_dissection(k4, 4);
  CHECK(plan.perm == std::vector<Index>{0, 1, 2, 3});
  CHECK(plan.blocks.size() == 1);
  CHECK(plan.blocks[0].kind == BlockKind::Diagonal);
  CHECK(nested_dissection(Graph{}, 4).perm.empty());
}

TEST_CASE("grid dissection keeps separators small and siblings independent") {
  const Index k = 16;
  Graph g = grid_graph(k);
  DissectionPlan plan = nested_dissection(g, 8);
  CHECK(is_permutation(plan.perm));
  for (Index i = 0; i < plan.size(); ++i) CHECK(plan.iperm[plan.perm[i]] == i);
  for (const auto& b : plan.blocks) {
    if (b.kind == BlockKind::Separator) {
      CHECK(b.size() <= 2 * k);
    } else {
      CHECK(b.size() <= 8);
    }
  }
  CsrMatrix a = graph_laplacian(g, 1.0);
  CHECK(count_sibling_couplings(plan, permute_symmetric(a, plan.perm)) == 0);
}

TEST_CASE("separators touch both halves") {
  Graph g = grid_graph(10);
  DissectionPlan plan = nested_dissection(g, 4);
  for (const auto& b : plan.blocks) {
    if (b.kind != BlockKind::Separator || b.size() == 0) continue;
    for (Index child : b.children) {
      const auto& c = plan.blocks[child];
      bool touches = false;
      for (Index p = b.begin; p < b.end && !touches; ++p)
        for (Index q = c.subtree_begin; q < c.end && !touches; ++q) touches = g.has_edge(plan.perm[p], plan.perm[q]);
      CHECK(touches);
    }
  }
}

TEST_CASE("disconnected graphs") {
  Graph g = Graph::from_edges(8, {{0, 1}, {1, 2}, {4, 5}, {5, 6}, {6, 7}});
  DissectionPlan plan = nested_dissection(g, 2);
  CHECK(is_permutation(plan.perm));
  CHECK(count_sibling_couplings(plan, permute_symmetric(graph_laplacian(g, 1.0), plan.perm)) == 0);
}

TEST_CASE("beam plans expand to DOF blocks") {
  CsrMatrix a = beam_matrix(6, 3, 3);
  DissectionPlan plan = dissect_matrix(a, 24, 3);
  CHECK(plan.size() == a.nrows);
  CHECK(is_permutation(plan.perm));
  for (Index i = 0; i < plan.size(); i += 3) {
    CHECK(plan.perm[i] % 3 == 0);
    CHECK(plan.perm[i + 1] == plan.perm[i] + 1);
  }
  CHECK(count_sibling_couplings(plan, permute_symmetric(a, plan.perm)) == 0);
}

TEST_CASE("ldlt hand cases") {
  CsrMatrix d = CsrMatrix::identity(2);
  d.values = {4.0, 9.0};
  LdltFactors f = ldlt_factor(d, natural_plan(2));
  CHECK(f.lower.nnz() == 0);
  CHECK(f.diag == std::vector<double>{4.0, 9.0});

  CsrMatrix a = oracle::from_dense((Eigen::MatrixXd(2, 2) << 4, 2, 2, 3).finished());
  f = ldlt_factor(a, natural_plan(2));
  CHECK(f.lower.nnz() == 1);
  CHECK(f.lower.at(1, 0) == 0.5);
  CHECK(f.diag == std::vector<double>{4.0, 2.0});

  CsrMatrix bad = oracle::from_dense((Eigen::MatrixXd(2, 2) << 1, 2, 2, 1).finished());
  CHECK_THROWS_AS(ldlt_factor(bad, natural_plan(2)), NumericalError);
}

TEST_CASE("ldlt reconstructs the permuted beam matrix") {
  CsrMatrix a = beam_matrix(6, 3, 3);
  DissectionPlan plan = dissect_matrix(a, 24, 3);
  LdltFactors f = ldlt_factor(a, plan);
  const Eigen::MatrixXd l = oracle::dense_lower(f);
  const Eigen::MatrixXd pa = oracle::dense(permute_symmetric(a, plan.perm));
  const Eigen::MatrixXd rec = l * Eigen::Map<const Eigen::VectorXd>(f.diag.data(), f.n).asDiagonal() * l.transpose();
  CHECK((rec - pa).norm() < 1e-10 * pa.norm());
  CHECK(f.lower.nnz() <= ldlt_factor(a, natural_plan(a.nrows)).lower.nnz());

  auto [dl, dd] = oracle::dense_ldlt(pa);
  CHECK((dl - l).norm() < 1e-9 * dl.norm());
  validate(f.lower);
  validate(f.lower_by_column);
  CHECK(oracle::dense(transpose(f.lower)) == oracle::dense(f.lower_by_column));
}

TEST_CASE("factorizer caches the analysis") {
  CsrMatrix a = beam_matrix(4, 3, 3);
  LdltFactorizer fz(24);
  fz.factor(a);
  for (double& v : a.values) v *= 1.5;
  fz.factor(a);
  CHECK(fz.analyses() == 1);
  CsrMatrix b = beam_matrix(5, 3, 3);
  fz.factor(b);
  CHECK(fz.analyses() == 2);
}

TEST_CASE("triangular solves: trivial factors") {
  WorkerPool pool(2);
  CsrMatrix d = CsrMatrix::identity(5);
  auto f = std::make_shared<LdltFactors>(ldlt_factor(d, natural_plan(5)));
  LevelScheduledSolver s(f, 2);
  std::vector<double> r{1, 2, 3, 4, 5}, y = r;
  s.solve_lower(y, pool);
  CHECK(y == r);
  s.solve_upper(y, pool);
  CHECK(y == r);

  // Path graph: L is bidiagonal under the natural order.
  Graph path = Graph::from_edges(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
  CsrMatrix a = graph_laplacian(path, 1.0);
  auto g = std::make_shared<LdltFactors>(ldlt_factor(a, natural_plan(6)));
  LevelScheduledSolver t(g, 4);
  const Eigen::MatrixXd l = oracle::dense_lower(*g);
  std::mt19937_64 rng(1);
  auto x = oracle::random_vector(6, rng);
  Eigen::VectorXd hand = l.triangularView<Eigen::UnitLower>().solve(Eigen::Map<Eigen::VectorXd>(x.data(), 6));
  auto lo = x;
  t.solve_lower(lo, pool);
  CHECK(oracle::rel_inf(lo, std::vector<double>(hand.data(), hand.data() + 6)) < 1e-14);
  Eigen::VectorXd hand_up =
      l.transpose().triangularView<Eigen::UnitUpper>().solve(Eigen::Map<Eigen::VectorXd>(x.data(), 6));
  auto up = x;
  t.solve_upper(up, pool);
  CHECK(oracle::rel_inf(up, std::vector<double>(hand_up.data(), hand_up.data() + 6)) < 1e-14);
  std::vector<double> short_vec(3);
  CHECK_THROWS_AS(t.solve_lower(short_vec, pool), InvalidArgument);
}

TEST_CASE("level-scheduled solves match sequential substitution") {
  CsrMatrix a = beam_matrix(8, 4, 4);
  auto f = std::make_shared<LdltFactors>(ldlt_factor(a, dissect_matrix(a, 48, 3)));
  std::mt19937_64 rng(2);
  auto r = oracle::random_vector(a.nrows, rng);
  auto lo_ref = r, up_ref = r;
  forward_substitution(*f, lo_ref);
  backward_substitution(*f, up_ref);
  for (Index tile : {1, 4, 16}) {
    LevelScheduledSolver s(f, tile);
    for (int w : {1, 2, 4, 8}) {
      WorkerPool pool(w);
      auto lo = r, up = r;
      s.solve_lower(lo, pool);
      s.solve_upper(up, pool);
      CHECK(oracle::rel_inf(lo, lo_ref) <= 1e-12);
      CHECK(oracle::rel_inf(up, up_ref) <= 1e-12);
    }
  }
}

TEST_CASE("apply inverts A") {
  CsrMatrix a = beam_matrix(6, 3, 3);
  auto f = std::make_shared<LdltFactors>(ldlt_factor(a, dissect_matrix(a, 24, 3)));
  LevelScheduledSolver s(f, 16);
  WorkerPool pool(3);
  std::mt19937_64 rng(3);
  auto x = oracle::random_vector(a.nrows, rng);
  auto ax = spmv(a, x);
  std::vector<double> z(a.nrows);
  s.apply(ax, z, pool);
  CHECK(oracle::rel_inf(z, x) < 1e-9);
  s.apply(std::vector<double>(a.nrows, 0.0), z, pool);
  CHECK(max_abs(z) == 0.0);
  CHECK(oracle::rel_inf(ldlt_solve_sequential(*f, ax), x) < 1e-9);
  for (int k = 0; k < 5; ++k) {
    auto v = oracle::random_vector(a.nrows, rng);
    s.apply(v, z, pool);
    CHECK(dot(v, z) > 0.0);
  }

  Eigen::MatrixXd d = oracle::random_spd(30, rng);
  CsrMatrix ds = oracle::from_dense(d);
  auto g = std::make_shared<LdltFactors>(ldlt_factor(ds, dissect_matrix(ds, 4, 1)));
  LevelScheduledSolver t(g, 3);
  auto b = oracle::random_vector(30, rng);
  std::vector<double> zz(30);
  t.apply(b, zz, pool);
  Eigen::VectorXd ref = d.ldlt().solve(Eigen::Map<Eigen::VectorXd>(b.data(), 30));
  CHECK(oracle::rel_inf(zz, std::vector<double>(ref.data(), ref.data() + 30)) < 1e-10);

  SolverConfig cfg;
  LdltPreconditioner pre(std::make_shared<LevelScheduledSolver>(f, 16), pool);
  std::vector<double> sol(a.nrows);
  SolveReport rep = pcg(a, ax, pre, sol, cfg);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 2);
}

TEST_CASE("async preconditioner lifecycle") {
  CsrMatrix a = beam_matrix(6, 3, 3);
  WorkerPool pool(1);
  AsyncPrecondConfig cfg;
  cfg.leaf_threshold = 24;
  AsyncLdltPreconditioner pre(cfg, pool);
  CHECK(pre.status() == PrecondStatus::Empty);
  std::vector<double> z(a.nrows);
  CHECK_THROWS_AS(pre.apply(std::vector<double>(a.nrows, 1.0), z), std::logic_error);
  pre.update(a, 1);
  CHECK(pre.status() == PrecondStatus::Factorizing);
  CHECK_FALSE(pre.ready());
  pre.wait();
  CHECK(pre.status() == PrecondStatus::Ready);
  CHECK(pre.staleness() == 0);
  CHECK(pre.solver()->factors().source_step == 1);

  std::mt19937_64 rng(4);
  auto b = oracle::random_vector(a.nrows, rng);
  for (long step = 2; step < 6; ++step) {
    pre.update(a, step);
    CHECK(pre.ready());
    std::vector<double> x(a.nrows);
    SolveReport r = pcg(a, b, pre, x, SolverConfig{});
    CHECK(r.iterations <= 2);
    CHECK(pre.staleness() >= 0);
    pre.wait();
  }
  CHECK(pre.completed() >= 2);
}

TEST_CASE("every-k policy and synchronous mode") {
  CsrMatrix a = beam_matrix(4, 3, 3);
  WorkerPool pool(1);
  AsyncPrecondConfig cfg;
  cfg.leaf_threshold = 24;
  cfg.synchronous = true;
  cfg.policy = RefactorPolicy::EveryK;
  cfg.every_k = 3;
  AsyncLdltPreconditioner pre(cfg, pool);
  std::vector<long> sources;
  for (long step = 1; step <= 7; ++step) {
    pre.update(a, step);
    sources.push_back(pre.solver()->factors().source_step);
  }
  CHECK(sources == std::vector<long>{1, 1, 1, 4, 4, 4, 7});
  CHECK(pre.staleness() == 0);
  CHECK(parse_refactor_policy("every-k") == RefactorPolicy::EveryK);
  CHECK_THROWS_AS(parse_refactor_policy("sometimes"), InvalidArgument);
}

TEST_CASE("failed factorization disables the preconditioner") {
  CsrMatrix bad = oracle::from_dense((Eigen::MatrixXd(3, 3) << 1, 2, 0, 2, 1, 0, 0, 0, 1).finished());
  WorkerPool pool(1);
  AsyncPrecondConfig cfg;
  AsyncLdltPreconditioner pre(cfg, pool);
  pre.update(bad, 1);
  pre.wait();
  CHECK(pre.status() == PrecondStatus::Disabled);
  CHECK_FALSE(pre.last_error().empty());
  pre.update(bad, 2);
  CHECK_FALSE(pre.in_flight());
}
