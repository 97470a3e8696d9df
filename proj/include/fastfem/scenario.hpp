#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fastfem/contact.hpp"
#include "fastfem/integrator.hpp"
#include "fastfem/models.hpp"

namespace fastfem {

/// Invalid or inconsistent scenario file.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct BeamSpec {
  Index nx = 10;
  Index ny = 3;
  Index nz = 3;
  double spacing = 0.02;
  Vec3 origin{0.0, 0.0, 0.0};
  /// "x-min", "x-max", "y-min", ... or "none".
  std::string fixed_face = "x-min";
  bool operator==(const BeamSpec&) const = default;
};

struct MeshSpec {
  std::optional<BeamSpec> beam;
  std::filesystem::path node_file;  // TetGen pair, used when beam is empty
  std::filesystem::path ele_file;
  std::vector<Index> fixed_nodes;   // added to the fixed face, if any
  bool operator==(const MeshSpec&) const = default;
};

struct RunSpec {
  long steps = 10;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Amplitude of a seeded random initial velocity on free DOFs (m/s).
  double initial_velocity_noise = 0.0;
  bool operator==(const RunSpec&) const = default;
};

struct OutputSpec {
  std::filesystem::path dir = ".";
  std::string metrics_csv = "metrics.csv";  // empty: no CSV
  long snapshot_every = 0;                  // 0: no snapshots
  std::string snapshot_dir = "snapshots";
  bool operator==(const OutputSpec&) const = default;
};

struct ScenarioConfig {
  MeshSpec mesh;
  MaterialLaw law = MaterialLaw::Corotational;
  MaterialParams material;
  IntegratorConfig integrator;
  std::vector<PointLoad> loads;
  SolverConfig solver;
  AsyncPrecondConfig precond;
  ContactConfig contact;
  RunSpec run;
  OutputSpec output;
  bool operator==(const ScenarioConfig&) const = default;

  void validate() const;
};

/// Parses JSON text. Relative mesh paths resolve against `base_dir`.
/// Unknown keys and bad values raise ConfigError naming the field.
ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);
/// Every field, defaults included, as pretty-printed JSON.
std::string serialize_scenario(const ScenarioConfig& config);

/// FASTFEM_WORKERS and FASTFEM_OUTPUT_DIR, when set, replace run.workers and output.dir.
void apply_environment(ScenarioConfig& config);

Mesh build_mesh(const MeshSpec& spec);

struct StepMetrics {
  long step = 0;
  double assembly_ms = 0.0;
  bool pattern_rebuilt = false;
  double solve_ms = 0.0;
  int cg_iterations = 0;
  double residual = 0.0;
  std::string precond_status;
  long staleness = -1;
};

inline constexpr const char* kMetricsHeader =
    "step,assembly_ms,pattern_rebuilt,solve_ms,cg_iterations,residual,precond_status,staleness";

void write_metrics_row(std::ostream& out, const StepMetrics& m);

/// Owns one simulation: mesh, material, worker pool, integrator and solvers.
class Scenario {
 public:
  explicit Scenario(ScenarioConfig config);
  ~Scenario();

  /// Advances one step (with contact when enabled).
  StepMetrics step();
  /// Runs config.run.steps steps; `observer` sees each step's metrics.
  std::vector<StepMetrics> run(const std::function<void(const StepMetrics&)>& observer = {});

  const ScenarioConfig& config() const { return config_; }
  const Mesh& mesh() const { return mesh_; }
  const SimState& state() const { return state_; }
  SimState& state() { return state_; }
  Integrator& integrator() { return *integrator_; }
  LinearSolver& solver() { return *solver_; }
  WorkerPool& pool() { return *pool_; }
  const ForceModel& model() const { return *model_; }
  const ContactReport& last_contact() const { return last_contact_; }
  double last_step_ms() const { return last_step_ms_; }

 private:
  ScenarioConfig config_;
  Mesh mesh_;
  std::unique_ptr<WorkerPool> pool_;
  std::unique_ptr<ForceModel> model_;
  std::unique_ptr<Integrator> integrator_;
  std::unique_ptr<LinearSolver> solver_;
  std::unique_ptr<ContactSolver> contact_;
  SimState state_;
  ContactReport last_contact_;
  double last_step_ms_ = 0.0;
};

/// run: executes the scenario, writes metrics CSV and VTK snapshots.
/// Returns 0 on success, 2 on configuration errors and 1 on runtime errors.
int run_command(const std::filesystem::path& config_path, std::optional<int> workers, bool quiet,
                std::ostream& out, std::ostream& err);

/// bench: runs the scenario once per variant and prints a comparison table.
/// Variants: fast, full, cg, pcg, tri-seq, tri-par.
int bench_command(const std::filesystem::path& config_path, const std::vector<std::string>& variants,
                  std::optional<int> workers, bool quiet, std::ostream& out, std::ostream& err);

}  // namespace fastfem
