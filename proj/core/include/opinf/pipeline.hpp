#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "opinf/fom.hpp"
#include "opinf/opinf.hpp"
#include "opinf/pod.hpp"
#include "opinf/rom.hpp"
#include "opinf/snapshots.hpp"
#include "opinf/stable.hpp"

namespace opinf {

/// Where the snapshot data comes from: a FOM run or an existing CSV file.
struct DatasetSource {
  std::optional<GenerateSpec> generate;
  std::optional<std::filesystem::path> file;
  /// Layout descriptor for `file`; defaults to `<stem>.layout.json` next to it.
  std::optional<std::filesystem::path> layout;
};

struct GridSpec {
  double t0 = 0.0;
  double t1 = 1.0;
  std::size_t samples = 2;

  [[nodiscard]] TimeGrid grid() const { return TimeGrid::uniform(t0, t1, samples); }
};

struct PipelineConfig {
  DatasetSource dataset;
  ScalingMode scaling = ScalingMode::kMinMax;
  /// Used only when the dataset carries no derivatives.
  DerivativeScheme derivatives = DerivativeScheme::kAuto;
  BasisOptions basis;
  SolverConfig solver;
  IntegrateOptions simulation;
  /// Grid for evaluate; unset means the dataset's own grid.
  std::optional<GridSpec> evaluation;
  std::filesystem::path output = "runs/default";
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parses the JSON form; relative dataset paths resolve against `base_dir`.
/// Unknown keys are rejected.
PipelineConfig parse_pipeline_config(const std::string& json_text,
                                     const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Complete echo, defaults included.
std::string to_json(const PipelineConfig& cfg);

/// Environment variable that prefixes relative output directories.
inline constexpr const char* kOutputRootEnv = "OPINF_OUTPUT_ROOT";

struct ArtifactPaths {
  std::filesystem::path root;
  std::filesystem::path data_csv;         // generated snapshots (+ .deriv.csv sibling)
  std::filesystem::path layout_json;
  std::filesystem::path generation_json;  // FOM config echo and timing
  std::filesystem::path model_dir;
  std::filesystem::path fit_json;
  std::filesystem::path rom_csv;          // lifted ROM trajectory
  std::filesystem::path simulation_json;
  std::filesystem::path report_json;
  std::filesystem::path error_csv;        // t, error
  std::filesystem::path plot_csv;         // t, z, value, series
};

ArtifactPaths artifact_paths(const PipelineConfig& cfg);

struct FittedRom {
  RomModel model;
  FitResult fit;
  std::optional<StableFitResult> stable;
  double seconds = 0.0;
};

/// scale, derivatives if missing, basis, project, assemble, solve.
FittedRom fit_rom(const SnapshotDataset& ds, const PipelineConfig& cfg);

struct RunReport {
  std::map<std::string, std::size_t> ranks;
  std::map<std::string, double> energy;
  double residual = 0.0;
  std::string backend;
  bool fell_back_to_tsvd = false;
  double max_real_eigenvalue = 0.0;
  TrajectoryError errors;
  bool diverged = false;
  std::optional<double> diverged_at;
  std::optional<double> fom_seconds;
  double fit_seconds = 0.0;
  double rom_seconds = 0.0;
  std::string config_json = "{}";

  /// ROM simulation time over FOM generation time, when the latter is known.
  [[nodiscard]] std::optional<double> time_ratio() const;
};

std::string to_json(const RunReport& report);

/// Simulates `model` from the first snapshot of `truth` on its grid and compares.
RunReport evaluate_rom(const RomModel& model, const SnapshotDataset& truth,
                       const IntegrateOptions& options, RomSimulation* simulation = nullptr);

// ---- stages; each reads its inputs from and writes its outputs to artifact_paths(cfg) ----

FomRun cmd_generate(const PipelineConfig& cfg);
FittedRom cmd_fit(const PipelineConfig& cfg);
RomSimulation cmd_simulate(const PipelineConfig& cfg);
/// Writes the report even when the ROM diverged; check `diverged` on return.
RunReport cmd_evaluate(const PipelineConfig& cfg);

struct ReportCheck {
  RunReport report;
  /// Largest difference between reported numbers and their recomputation.
  double max_discrepancy = 0.0;
  std::map<std::string, double> discrepancies;
};

/// Re-reads the persisted artifacts and recomputes every reported number.
ReportCheck cmd_report(const PipelineConfig& cfg);

/// The dataset used by fit and evaluate: the generated files, or the configured file.
SnapshotDataset load_pipeline_dataset(const PipelineConfig& cfg);

}  // namespace opinf
