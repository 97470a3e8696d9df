// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fastfem/contact.hpp"
#include "fastfem/dissection.hpp"
#include "fastfem/scenario.hpp"
#include "fastfem/triangular.hpp"
#include "model_helpers.hpp"
#include "oracles.hpp"

using namespace fastfem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ScenarioConfig beam_config(Index nx, Index ny, Index nz, double spacing) {
  ScenarioConfig c;
  c.mesh.beam = BeamSpec{nx, ny, nz, spacing, {0.0, 0.0, 0.0}, "x-min"};
  c.output.metrics_csv.clear();
  c.run.workers = 1;
  return c;
}

// Full M + K system pass of a beam at a perturbed state.
struct SystemPass {
  Mesh mesh;
  std::unique_ptr<ForceModel> model;
  TripletStream stream;
  std::vector<double> coeffs;
};

void criterion1() {
  std::mt19937_64 rng(2024);
  const auto t0 = Clock::now();
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<Index> nd(1, 64);
    const Index n = nd(rng);
    std::uniform_int_distribution<Index> idx(0, n - 1), count(1, 400);
    std::uniform_real_distribution<double> val(-1e3, 1e3);
    const Index m = count(rng);
    std::vector<Index> rows, cols;
    std::vector<double> vals;
    for (Index k = 0; k < m; ++k) {
      if (k > 0 && k % 2 == 0) {  // forced duplicate of an earlier position
        std::uniform_int_distribution<Index> back(0, k - 1);
        const Index j = back(rng);
        rows.push_back(rows[j]);
        cols.push_back(cols[j]);
      } else {
        rows.push_back(idx(rng));
        cols.push_back(idx(rng));
      }
      vals.push_back(val(rng));
    }
    std::vector<Index> fixed;
    if (trial % 3 == 0)
      for (Index d = 0; d < n; d += 7) fixed.push_back(d);
    TripletStream s;
    s.begin_pass();
    for (Index k = 0; k < m; ++k) s.add(rows[k], cols[k], vals[k]);
    s.end_pass();
    auto [pattern, mapping] = build_pattern(s, n, fixed);
    if (!oracle::bit_equal(compress(s, mapping), oracle::sort_merge(rows, cols, vals, n, fixed))) ++mismatches;
  }
  const double secs = seconds_since(t0);
  report(1, mismatches == 0 && secs < 5.0,
         fmt("1000 random streams (n<=64, forced duplicates, some fixed DOFs): %d mismatches vs sort-merge oracle, %.2f s",
             mismatches, secs));
}

void criterion2() {
  auto run_once = [] {
    ScenarioConfig c = beam_config(12, 3, 3, 0.03);
    c.run.steps = 20;
    c.precond.synchronous = true;
    Scenario s(c);
    std::vector<bool> flags;
    for (const auto& m : s.run()) flags.push_back(m.pattern_rebuilt);
    return flags;
  };
  auto a = run_once(), b = run_once();
  const long count = std::count(a.begin(), a.end(), true);
  report(2, count == 1 && a.front() && a == b,
         fmt("20-step beam: pattern rebuilt %ld time(s), on step 1: %s, identical across two runs: %s", count,
             a.front() ? "yes" : "no", a == b ? "yes" : "no"));
}

void criterion3() {
  Mesh mesh = generate_beam(6, 6, 60, 0.01);
  mesh.set_fixed_nodes(beam_face_nodes(6, 6, 60, 2, false));
  MaterialParams params;
  auto model = make_force_model(MaterialLaw::Corotational, mesh, params);
  std::mt19937_64 rng(3);
  auto x = helpers::perturbed_state(mesh, rng, 1e-3);
  TripletStream s;
  s.begin_pass();
  lumped_mass(mesh, params, model->precomp(), s);
  const Index nm = s.cursor();
  model->evaluate(x, &s, {}, {});
  s.end_pass();
  std::vector<double> coeffs(s.size(), 1e-4 * 1.1);
  std::fill(coeffs.begin(), coeffs.begin() + nm, 1.05);
  auto [pattern, mapping] = build_pattern(s, mesh.num_dofs(), mesh.fixed_dofs());
  const CsrMatrix ref = compress(s, mapping, coeffs);
  bool all = true;
  std::string detail;
  for (int k : {1, 2, 4, 8}) {
    const bool same = oracle::bit_equal(compress_parallel(s, mapping, coeffs, k), ref);
    all = all && same;
    detail += fmt(" k=%d:%s", k, same ? "identical" : "DIFFERENT");
  }
  report(3, all && mesh.num_elements() >= 8000,
         fmt("%d-tet beam, %d triplets, nnz %d;", mesh.num_elements(), s.size(), ref.nnz()) + detail);
}

void criterion4() {
  Mesh mesh = generate_beam(3, 3, 4, 0.05);
  MaterialParams params{1e6, 0.35, 1000};
  std::mt19937_64 rng(4);
  std::vector<std::vector<double>> states;
  for (int i = 0; i < 20; ++i) states.push_back(helpers::perturbed_state(mesh, rng, 1e-5));
  bool ok = true;
  std::string detail = "20 states (random rigid motion + 1e-5*bbox perturbation), central differences at 1e-6*bbox;";
  for (auto law : {MaterialLaw::Corotational, MaterialLaw::StVenantKirchhoff}) {
    auto model = make_force_model(law, mesh, params);
    double worst = 0.0;
    for (const auto& x : states) worst = std::max(worst, helpers::tangent_error(*model, x));
    ok = ok && worst < 1e-4;
    detail += fmt(" %s max rel err %.2e", to_string(law).c_str(), worst);
  }
  auto stvk = make_force_model(MaterialLaw::StVenantKirchhoff, mesh, params);
  double large = 0.0;
  for (int i = 0; i < 5; ++i) large = std::max(large, helpers::tangent_error(*stvk, helpers::perturbed_state(mesh, rng, 5e-2)));
  detail += fmt(" (stvk at 5e-2 perturbation: %.2e)", large);
  report(4, ok, detail);
}

void criterion5() {
  ScenarioConfig c = beam_config(48, 8, 8, 0.01);
  c.run.steps = 0;
  c.precond.enabled = false;
  Scenario s(c);
  std::vector<double> b;
  const CsrMatrix& a = s.integrator().assemble_system(s.state(), b);
  auto factors = std::make_shared<LdltFactors>(ldlt_factor(a, dissect_matrix(a, 64, 3)));
  LevelScheduledSolver solver(factors, 16);
  std::mt19937_64 rng(5);
  auto r = oracle::random_vector(a.nrows, rng);
  auto lo_ref = r, up_ref = r;
  forward_substitution(*factors, lo_ref);
  backward_substitution(*factors, up_ref);
  double worst = 0.0;
  for (int w : {1, 2, 4, 8}) {
    WorkerPool pool(w);
    auto lo = r, up = r;
    solver.solve_lower(lo, pool);
    solver.solve_upper(up, pool);
    worst = std::max({worst, oracle::rel_inf(lo, lo_ref), oracle::rel_inf(up, up_ref)});
  }
  report(5, worst <= 1e-12 && s.mesh().num_nodes() >= 2996,
         fmt("%d-node beam, nnz(L) %d, %d levels; workers {1,2,4,8}: max rel inf-norm diff %.2e", s.mesh().num_nodes(),
             factors->lower.nnz(), factors->plan.num_levels(), worst));
}

ScenarioConfig deforming_beam() {
  ScenarioConfig c = beam_config(16, 4, 4, 0.025);
  c.run.steps = 60;
  c.solver.max_iterations = 5000;
  return c;
}

void criterion6() {
  ScenarioConfig fresh_cfg = deforming_beam();
  fresh_cfg.precond.synchronous = true;
  Scenario fresh(fresh_cfg);
  int fresh_max = 0;
  bool fresh_conv = true;
  for (const auto& m : fresh.run()) {
    fresh_max = std::max(fresh_max, m.cg_iterations);
    fresh_conv = fresh_conv && m.residual <= 1e-9;
  }

  ScenarioConfig async_cfg = deforming_beam();
  Scenario async(async_cfg);
  int async_max = 0, counted = 0, max_stale = 0;
  bool async_conv = true;
  for (const auto& m : async.run()) {
    if (m.precond_status != "ready" || m.staleness > 5) continue;
    ++counted;
    async_max = std::max(async_max, m.cg_iterations);
    max_stale = std::max<int>(max_stale, m.staleness);
    async_conv = async_conv && m.residual <= 1e-9;
  }
  report(6, fresh_conv && fresh_max <= 5 && async_conv && counted > 0 && async_max <= 15,
         fmt("fresh factors: max %d PCG iterations over 60 steps; async on-completion: %d steps at staleness <= 5 "
             "(max seen %d), max %d iterations",
             fresh_max, counted, max_stale, async_max));
}

void criterion7() {
  auto timed_run = [](bool enabled, std::vector<double>& in_flight, std::vector<double>& all) {
    ScenarioConfig c = deforming_beam();
    c.precond.enabled = enabled;
    Scenario s(c);
    for (long i = 0; i < c.run.steps; ++i) {
      const bool flying = enabled && s.solver().precond()->in_flight();
      s.step();
      all.push_back(s.last_step_ms());
      if (flying) in_flight.push_back(s.last_step_ms());
    }
  };
  std::vector<double> flying, async_all, disabled, unused;
  timed_run(true, flying, async_all);
  timed_run(false, unused, disabled);
  const double a = median(flying), d = median(disabled);
  report(7, !flying.empty() && a <= 2.0 * d,
         fmt("median step %.3f ms with a factorization in flight (%zu steps) vs %.3f ms with the preconditioner "
             "disabled: ratio %.2f",
             a, flying.size(), d, d > 0 ? a / d : 0.0));
}

void criterion8() {
  bool ok = true;
  std::string detail;
  for (Index k : {8, 12, 16}) {
    Mesh m = generate_beam(k, k, k, 1.0);
    Graph g = vertex_adjacency(m);
    DissectionPlan plan = nested_dissection(g, 64);
    const Index top = plan.blocks[plan.root].size();
    // Pattern of the node graph with a diagonal.
    CsrMatrix a;
    a.nrows = a.ncols = g.num_vertices();
    for (Index v = 0; v < g.num_vertices(); ++v) {
      std::vector<Index> row(g.begin(v), g.end(v));
      row.push_back(v);
      std::sort(row.begin(), row.end());
      for (Index c : row) {
        a.col_ind.push_back(c);
        a.values.push_back(1.0);
      }
      a.row_ptr.push_back(a.nnz());
    }
    const Index couplings = count_sibling_couplings(plan, permute_symmetric(a, plan.perm));
    ok = ok && top <= 3 * k * k && couplings == 0;
    detail += fmt(" k=%d: top separator %d (bound %d), sibling couplings %d;", k, top, 3 * k * k, couplings);
  }
  report(8, ok, detail);
}

void criterion9() {
  auto assembly_times = [](bool full) {
    ScenarioConfig c = beam_config(60, 6, 6, 0.01);
    c.run.steps = 0;
    Scenario s(c);
    s.integrator().assembler().set_force_full(full);
    std::vector<double> times, b;
    for (int i = 0; i < 15; ++i) {
      const auto t0 = Clock::now();
      s.integrator().assemble_system(s.state(), b);
      times.push_back(seconds_since(t0) * 1e3);
    }
    return std::make_pair(median(times), s.mesh().num_elements());
  };
  auto [fast, tets] = assembly_times(false);
  auto [full, _] = assembly_times(true);
  report(9, tets >= 8000 && fast < full,
         fmt("%d tets: median assembly %.2f ms fast path vs %.2f ms forced full rebuild (%.0f%% less)", tets, fast, full,
             100.0 * (1.0 - fast / full)));
}

void criterion10() {
  ScenarioConfig c = beam_config(10, 3, 3, 0.04);
  c.mesh.beam->fixed_face = "none";
  c.mesh.beam->origin = {0.0, 0.0, 0.02};
  c.contact.enabled = true;
  c.contact.plane_z = 0.0;
  c.run.steps = 100;
  c.precond.synchronous = true;
  Scenario s(c);
  double worst_pen = 0.0, worst_lcp = 0.0;
  Index rebuilds_at_contact = -1;
  bool constant = true;
  int contact_steps = 0;
  for (long i = 0; i < c.run.steps; ++i) {
    s.step();
    const ContactReport& r = s.last_contact();
    worst_pen = std::max(worst_pen, r.max_penetration);
    worst_lcp = std::max(worst_lcp, r.pgs.complementarity);
    if (r.active > 0) {
      ++contact_steps;
      const Index now = s.integrator().assembler().rebuild_count();
      if (rebuilds_at_contact < 0) rebuilds_at_contact = now;
      constant = constant && now == rebuilds_at_contact;
    }
  }
  report(10, contact_steps > 0 && worst_pen <= 1e-5 && worst_lcp <= 1e-8 && constant,
         fmt("100 steps, %d with active contacts: max penetration %.2e m, max LCP residual %.2e, pattern rebuilds "
             "during contact constant: %s",
             contact_steps, worst_pen, worst_lcp, constant ? "yes" : "no"));
}

void criterion11() {
  ScenarioConfig c = beam_config(16, 4, 4, 0.025);
  c.integrator.h = 0.04;
  c.material.young_modulus = 1e6;
  c.run.steps = 500;
  c.solver.max_iterations = 5000;
  Scenario s(c);
  std::vector<double> vmax;
  bool finite = true;
  for (long i = 0; i < c.run.steps; ++i) {
    s.step();
    const double v = max_abs(s.state().v);
    finite = finite && std::isfinite(v);
    vmax.push_back(v);
  }
  const double early = *std::max_element(vmax.begin(), vmax.begin() + 250);
  const double late = *std::max_element(vmax.begin() + 250, vmax.end());
  report(11, finite && late <= early,
         fmt("h=0.04 s, E=1e6 Pa, 500 steps: max |v| %.3e m/s over steps 1-250, %.3e m/s over steps 251-500", early,
             late));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                    criterion5, criterion6, criterion7, criterion8,
                                                    criterion9, criterion10, criterion11};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), false, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
