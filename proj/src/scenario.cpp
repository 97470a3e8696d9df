#include "fastfem/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "fastfem/dissection.hpp"
#include "fastfem/io.hpp"
#include "fastfem/triangular.hpp"
#include "json.hpp"

namespace fastfem {

using nlohmann::json;

namespace {

// Reads typed fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(name_or_root() + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  void get_vec3(const std::string& key, Vec3& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) throw ConfigError(field(key) + ": expected an array of 3 numbers");
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ConfigError(field(key) + ": expected an array of 3 numbers");
      out[i] = v[i].get<double>();
    }
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string name_or_root() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto wrap(const std::string& field, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    if (msg.rfind(field, 0) == 0) throw ConfigError(msg);
    throw ConfigError(field + ": " + msg);
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  if (mesh.beam) {
    const BeamSpec& b = *mesh.beam;
    if (b.nx < 2 || b.ny < 2 || b.nz < 2) throw ConfigError("mesh.beam: nx, ny and nz must be >= 2");
    if (!(b.spacing > 0.0)) throw ConfigError("mesh.beam.spacing must be > 0");
    static const std::set<std::string> faces{"none", "x-min", "x-max", "y-min", "y-max", "z-min", "z-max"};
    if (!faces.count(b.fixed_face)) throw ConfigError("mesh.beam.fixed_face: unknown face '" + b.fixed_face + "'");
  } else {
    if (mesh.node_file.empty() || mesh.ele_file.empty()) throw ConfigError("mesh: needs either beam or tetgen");
    for (const auto& p : {mesh.node_file, mesh.ele_file})
      if (!std::filesystem::exists(p)) throw ConfigError("mesh.tetgen: file not found: " + p.string());
  }
  wrap("material", [&] { material.validate(); });
  wrap("integrator", [&] { integrator.validate(); });
  wrap("solver", [&] { solver.validate(); });
  wrap("precond", [&] { precond.validate(); });
  wrap("contact", [&] { contact.validate(); });
  if (run.steps < 0) throw ConfigError("run.steps must be >= 0");
  if (run.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (!(run.initial_velocity_noise >= 0.0)) throw ConfigError("run.initial_velocity_noise must be >= 0");
  if (output.snapshot_every < 0) throw ConfigError("output.snapshot_every must be >= 0");
}

ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ScenarioConfig c;
  Section top(root, "");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };

  if (top.has("mesh")) {
    Section m(top.at("mesh"), "mesh");
    if (m.has("beam")) {
      Section b(m.at("beam"), "mesh.beam");
      BeamSpec spec;
      b.get("nx", spec.nx);
      b.get("ny", spec.ny);
      b.get("nz", spec.nz);
      b.get("spacing", spec.spacing);
      b.get_vec3("origin", spec.origin);
      b.get("fixed_face", spec.fixed_face);
      c.mesh.beam = spec;
    }
    if (m.has("tetgen")) {
      if (c.mesh.beam) throw ConfigError("mesh: beam and tetgen are mutually exclusive");
      Section t(m.at("tetgen"), "mesh.tetgen");
      std::string node, ele;
      t.get("node", node);
      t.get("ele", ele);
      c.mesh.node_file = resolve(node);
      c.mesh.ele_file = resolve(ele);
    } else if (!c.mesh.beam) {
      c.mesh.beam = BeamSpec{};
    }
    m.get("fixed_nodes", c.mesh.fixed_nodes);
  } else {
    c.mesh.beam = BeamSpec{};
  }

  if (top.has("material")) {
    Section s(top.at("material"), "material");
    if (s.has("law")) {
      std::string law;
      s.get("law", law);
      c.law = wrap("material.law", [&] { return parse_material_law(law); });
    }
    s.get("E", c.material.young_modulus);
    s.get("nu", c.material.poisson_ratio);
    s.get("rho", c.material.density);
  }
  if (top.has("integrator")) {
    Section s(top.at("integrator"), "integrator");
    s.get("h", c.integrator.h);
    s.get("alpha", c.integrator.alpha);
    s.get("beta", c.integrator.beta);
    s.get_vec3("gravity", c.integrator.gravity);
    s.get("newton_iterations", c.integrator.newton_iterations);
  }
  if (top.has("loads")) {
    const json& loads = top.at("loads");
    if (!loads.is_array()) throw ConfigError("loads: expected an array");
    for (std::size_t i = 0; i < loads.size(); ++i) {
      Section s(loads[i], "loads[" + std::to_string(i) + "]");
      PointLoad l;
      s.get("node", l.node);
      s.get_vec3("force", l.force);
      c.loads.push_back(l);
    }
  }
  if (top.has("solver")) {
    Section s(top.at("solver"), "solver");
    if (s.has("mode")) {
      std::string mode;
      s.get("mode", mode);
      c.solver.mode = wrap("solver.mode", [&] { return parse_solver_mode(mode); });
    }
    s.get("tol", c.solver.tolerance);
    s.get("max_iter", c.solver.max_iterations);
  }
  if (top.has("precond")) {
    Section s(top.at("precond"), "precond");
    s.get("enabled", c.precond.enabled);
    s.get("leaf_threshold", c.precond.leaf_threshold);
    s.get("tile_t", c.precond.tile);
    if (s.has("policy")) {
      std::string policy;
      s.get("policy", policy);
      c.precond.policy = wrap("precond.policy", [&] { return parse_refactor_policy(policy); });
    }
    s.get("every_k", c.precond.every_k);
    s.get("synchronous", c.precond.synchronous);
    s.get("worker_nice", c.precond.worker_nice);
  }
  if (top.has("contact")) {
    Section s(top.at("contact"), "contact");
    s.get("enabled", c.contact.enabled);
    s.get("plane_z", c.contact.plane_z);
    s.get("margin", c.contact.margin);
    s.get("pgs_tolerance", c.contact.pgs_tolerance);
    s.get("pgs_max_sweeps", c.contact.pgs_max_sweeps);
    s.get("max_rounds", c.contact.max_rounds);
  }
  if (top.has("run")) {
    Section s(top.at("run"), "run");
    s.get("steps", c.run.steps);
    s.get("seed", c.run.seed);
    s.get("workers", c.run.workers);
    s.get("initial_velocity_noise", c.run.initial_velocity_noise);
  }
  if (top.has("output")) {
    Section s(top.at("output"), "output");
    std::string dir = c.output.dir.string();
    s.get("dir", dir);
    c.output.dir = dir;
    s.get("metrics_csv", c.output.metrics_csv);
    s.get("snapshot_every", c.output.snapshot_every);
    s.get("snapshot_dir", c.output.snapshot_dir);
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path());
}

std::string serialize_scenario(const ScenarioConfig& c) {
  json j;
  if (c.mesh.beam) {
    const BeamSpec& b = *c.mesh.beam;
    j["mesh"]["beam"] = {{"nx", b.nx},           {"ny", b.ny},
                         {"nz", b.nz},           {"spacing", b.spacing},
                         {"origin", b.origin},   {"fixed_face", b.fixed_face}};
  } else {
    j["mesh"]["tetgen"] = {{"node", c.mesh.node_file.string()}, {"ele", c.mesh.ele_file.string()}};
  }
  j["mesh"]["fixed_nodes"] = c.mesh.fixed_nodes;
  j["material"] = {{"law", to_string(c.law)},
                   {"E", c.material.young_modulus},
                   {"nu", c.material.poisson_ratio},
                   {"rho", c.material.density}};
  j["integrator"] = {{"h", c.integrator.h},
                     {"alpha", c.integrator.alpha},
                     {"beta", c.integrator.beta},
                     {"gravity", c.integrator.gravity},
                     {"newton_iterations", c.integrator.newton_iterations}};
  j["loads"] = json::array();
  for (const auto& l : c.loads) j["loads"].push_back({{"node", l.node}, {"force", l.force}});
  j["solver"] = {{"mode", to_string(c.solver.mode)}, {"tol", c.solver.tolerance}, {"max_iter", c.solver.max_iterations}};
  j["precond"] = {{"enabled", c.precond.enabled},       {"leaf_threshold", c.precond.leaf_threshold},
                  {"tile_t", c.precond.tile},           {"policy", to_string(c.precond.policy)},
                  {"every_k", c.precond.every_k},       {"synchronous", c.precond.synchronous},
                  {"worker_nice", c.precond.worker_nice}};
  j["contact"] = {{"enabled", c.contact.enabled},         {"plane_z", c.contact.plane_z},
                  {"margin", c.contact.margin},           {"pgs_tolerance", c.contact.pgs_tolerance},
                  {"pgs_max_sweeps", c.contact.pgs_max_sweeps}, {"max_rounds", c.contact.max_rounds}};
  j["run"] = {{"steps", c.run.steps},
              {"seed", c.run.seed},
              {"workers", c.run.workers},
              {"initial_velocity_noise", c.run.initial_velocity_noise}};
  j["output"] = {{"dir", c.output.dir.string()},
                 {"metrics_csv", c.output.metrics_csv},
                 {"snapshot_every", c.output.snapshot_every},
                 {"snapshot_dir", c.output.snapshot_dir}};
  return j.dump(2);
}

void apply_environment(ScenarioConfig& config) {
  if (const char* w = std::getenv("FASTFEM_WORKERS"); w && *w) {
    char* end = nullptr;
    const long n = std::strtol(w, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("FASTFEM_WORKERS: expected a positive integer");
    config.run.workers = static_cast<int>(n);
  }
  if (const char* d = std::getenv("FASTFEM_OUTPUT_DIR"); d && *d) config.output.dir = d;
}

Mesh build_mesh(const MeshSpec& spec) {
  Mesh mesh;
  std::vector<Index> fixed = spec.fixed_nodes;
  if (spec.beam) {
    const BeamSpec& b = *spec.beam;
    mesh = generate_beam(b.nx, b.ny, b.nz, b.spacing, b.origin);
    if (b.fixed_face != "none") {
      const int axis = b.fixed_face[0] - 'x';
      auto face = beam_face_nodes(b.nx, b.ny, b.nz, axis, b.fixed_face.substr(2) == "max");
      fixed.insert(fixed.end(), face.begin(), face.end());
    }
  } else {
    mesh = load_tetgen(spec.node_file, spec.ele_file);
  }
  for (Index f : fixed)
    if (f < 0 || f >= mesh.num_nodes()) throw ConfigError("mesh.fixed_nodes: node " + std::to_string(f) + " out of range");
  mesh.set_fixed_nodes(std::move(fixed));
  return mesh;
}

void write_metrics_row(std::ostream& out, const StepMetrics& m) {
  char residual[40];
  std::snprintf(residual, sizeof residual, "%.17g", m.residual);
  out << m.step << ',' << std::fixed << std::setprecision(4) << m.assembly_ms << ',' << (m.pattern_rebuilt ? 1 : 0)
      << ',' << m.solve_ms << std::defaultfloat << ',' << m.cg_iterations << ',' << residual << ','
      << m.precond_status << ',' << m.staleness << '\n';
}

Scenario::Scenario(ScenarioConfig config) : config_(std::move(config)) {
  config_.validate();
  mesh_ = build_mesh(config_.mesh);
  pool_ = std::make_unique<WorkerPool>(config_.run.workers);
  model_ = make_force_model(config_.law, mesh_, config_.material);
  integrator_ = std::make_unique<Integrator>(*model_, config_.integrator, pool_.get());
  integrator_->set_point_loads(config_.loads);
  solver_ = std::make_unique<LinearSolver>(config_.solver, config_.precond, *pool_);
  contact_ = std::make_unique<ContactSolver>(config_.contact);
  state_ = integrator_->initial_state();
  if (config_.run.initial_velocity_noise > 0.0) {
    std::mt19937_64 rng(config_.run.seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<char> fixed(mesh_.num_dofs(), 0);
    for (Index d : mesh_.fixed_dofs()) fixed[d] = 1;
    for (Index d = 0; d < mesh_.num_dofs(); ++d) {
      const double r = dist(rng);
      if (!fixed[d]) state_.v[d] = config_.run.initial_velocity_noise * r;
    }
  }
}

Scenario::~Scenario() = default;

StepMetrics Scenario::step() {
  const auto t0 = std::chrono::steady_clock::now();
  StepInfo info = contact_->step(*integrator_, state_, *solver_, &last_contact_);
  last_step_ms_ = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  StepMetrics m;
  m.step = state_.step;
  m.assembly_ms = info.assembly_ms;
  m.pattern_rebuilt = info.pattern_rebuilt;
  m.solve_ms = info.solve_ms;
  m.cg_iterations = info.solve.iterations;
  m.residual = info.solve.final_residual;
  m.precond_status = to_string(info.precond_status);
  m.staleness = info.staleness;
  return m;
}

std::vector<StepMetrics> Scenario::run(const std::function<void(const StepMetrics&)>& observer) {
  std::vector<StepMetrics> all;
  for (long s = 0; s < config_.run.steps; ++s) {
    all.push_back(step());
    if (observer) observer(all.back());
  }
  return all;
}

namespace {

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "fastfem: config error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    err << "fastfem: config error: mesh: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "fastfem: runtime error: " << e.what() << '\n';
    return 1;
  }
}

ScenarioConfig prepare_config(const std::filesystem::path& path, std::optional<int> workers) {
  ScenarioConfig config = load_scenario(path);
  apply_environment(config);
  if (workers) {
    if (*workers < 1) throw ConfigError("--workers must be >= 1");
    config.run.workers = *workers;
  }
  return config;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int run_command(const std::filesystem::path& config_path, std::optional<int> workers, bool quiet, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    ScenarioConfig config = prepare_config(config_path, workers);
    Scenario scenario(config);
    const OutputSpec& o = config.output;
    std::ofstream csv;
    if (!o.metrics_csv.empty()) {
      std::filesystem::path p = o.dir / o.metrics_csv;
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      csv.open(p);
      if (!csv) throw std::runtime_error("cli: cannot write " + p.string());
      csv << kMetricsHeader << '\n';
    }
    auto snapshot = [&](long step) {
      char name[64];
      std::snprintf(name, sizeof name, "step_%06ld.vtk", step);
      write_vtk(o.dir / o.snapshot_dir / name, scenario.mesh(), scenario.state().x);
    };
    if (o.snapshot_every > 0) snapshot(0);
    scenario.run([&](const StepMetrics& m) {
      if (csv.is_open()) write_metrics_row(csv, m);
      if (o.snapshot_every > 0 && m.step % o.snapshot_every == 0) snapshot(m.step);
      if (!quiet)
        out << "step " << m.step << "  iters " << m.cg_iterations << "  residual " << m.residual << "  precond "
            << m.precond_status << '\n';
    });
    if (!quiet) out << "done: " << config.run.steps << " steps, " << scenario.mesh().num_nodes() << " nodes, "
                    << scenario.mesh().num_elements() << " tets\n";
    return 0;
  });
}

int bench_command(const std::filesystem::path& config_path, const std::vector<std::string>& variants,
                  std::optional<int> workers, bool quiet, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ScenarioConfig base = prepare_config(config_path, workers);
    static const std::set<std::string> known{"fast", "full", "cg", "pcg", "tri-seq", "tri-par"};
    for (const auto& v : variants)
      if (!known.count(v)) throw ConfigError("bench: unknown variant '" + v + "'");

    if (!quiet) {
      const Mesh mesh = build_mesh(base.mesh);
      out << "bench: " << mesh.num_nodes() << " nodes, " << mesh.num_elements() << " tets, " << base.run.workers
          << " worker(s), " << base.run.steps << " steps per variant\n";
    }
    out << std::left << std::setw(10) << "variant" << std::right << std::setw(8) << "steps" << std::setw(16)
        << "assembly_ms" << std::setw(14) << "solve_ms" << std::setw(12) << "iters" << std::setw(10) << "rebuilds"
        << '\n';
    std::vector<double> seq_solution;
    for (const auto& v : variants) {
      ScenarioConfig c = base;
      c.output = OutputSpec{};
      if (v == "cg") c.solver.mode = SolverMode::CG;
      if (v == "pcg") c.solver.mode = SolverMode::PcgLdlt;
      Scenario s(c);
      if (v == "full") s.integrator().assembler().set_force_full(true);

      if (v == "tri-seq" || v == "tri-par") {
        // Factor the first system matrix and time one lower + upper solve pair.
        std::vector<double> b;
        const CsrMatrix& a = s.integrator().assemble_system(s.state(), b);
        auto factors = std::make_shared<LdltFactors>(
            ldlt_factor(a, dissect_matrix(a, c.precond.leaf_threshold, 3)));
        LevelScheduledSolver tri(factors, c.precond.tile);
        std::vector<double> times, z(b.size());
        const int reps = std::max<long>(c.run.steps, 1);
        for (int r = 0; r < reps; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          if (v == "tri-seq") {
            z = ldlt_solve_sequential(*factors, b);
          } else {
            tri.apply(b, z, s.pool());
          }
          times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        }
        out << std::left << std::setw(10) << v << std::right << std::setw(8) << reps << std::setw(16) << "-"
            << std::setw(14) << std::fixed << std::setprecision(4) << median(times) << std::defaultfloat
            << std::setw(12) << "-" << std::setw(10) << "-" << '\n';
        if (v == "tri-seq") {
          seq_solution = z;
        } else if (!seq_solution.empty()) {
          double diff = 0.0, scale = 0.0;
          for (std::size_t i = 0; i < z.size(); ++i) {
            diff = std::max(diff, std::abs(z[i] - seq_solution[i]));
            scale = std::max(scale, std::abs(seq_solution[i]));
          }
          out << "  tri-par vs tri-seq: max relative difference " << (scale > 0 ? diff / scale : diff) << '\n';
        }
        continue;
      }

      std::vector<double> asm_ms, solve_ms;
      double iters = 0.0;
      auto metrics = s.run();
      for (const auto& m : metrics) {
        asm_ms.push_back(m.assembly_ms);
        solve_ms.push_back(m.solve_ms);
        iters += m.cg_iterations;
      }
      out << std::left << std::setw(10) << v << std::right << std::setw(8) << metrics.size() << std::setw(16)
          << std::fixed << std::setprecision(4) << median(asm_ms) << std::setw(14) << median(solve_ms)
          << std::setw(12) << std::setprecision(2) << (metrics.empty() ? 0.0 : iters / metrics.size())
          << std::defaultfloat << std::setw(10) << s.integrator().assembler().rebuild_count() << '\n';
    }
    return 0;
  });
}

}  // namespace fastfem
