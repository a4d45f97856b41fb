#include "opinf/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "json_io.hpp"
#include "opinf/csv.hpp"
#include "opinf/error.hpp"

namespace opinf {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail_validation("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail_validation("config: unknown key '" + key + "' in " + where);
  }
}

// Reads j[key] into out when present and not null.
template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string derivative_scheme_name(DerivativeScheme s) {
  switch (s) {
    case DerivativeScheme::kCentral2:
      return "central-2";
    case DerivativeScheme::kForward1:
      return "forward-1";
    case DerivativeScheme::kBackward1:
      return "backward-1";
    case DerivativeScheme::kAuto:
      return "auto";
  }
  return "auto";
}

// ---- FOM configs ----

json burgers_to_json(const BurgersConfig& c) {
  return {{"n", c.n},           {"length", c.length}, {"viscosity", c.viscosity}, {"left", c.left},
          {"right", c.right},   {"initial", c.initial}, {"amplitude", c.amplitude}};
}

BurgersConfig burgers_from_json(const json& j) {
  check_keys(j, {"n", "length", "viscosity", "left", "right", "initial", "amplitude"}, "burgers");
  BurgersConfig c;
  read(j, "n", c.n);
  read(j, "length", c.length);
  read(j, "viscosity", c.viscosity);
  read(j, "left", c.left);
  read(j, "right", c.right);
  read(j, "initial", c.initial);
  read(j, "amplitude", c.amplitude);
  return c;
}

json reactor_to_json(const ReactorSurrogateConfig& c) {
  return {{"n_cells", c.n_cells}, {"length", c.length},     {"velocity", c.velocity},
          {"diffusion", c.diffusion}, {"cooling", c.cooling}, {"t_cool", c.t_cool},
          {"beta", c.beta},       {"gamma", c.gamma},       {"t_ref", c.t_ref},
          {"source_x", c.source_x}, {"source_t", c.source_t}};
}

ReactorSurrogateConfig reactor_from_json(const json& j) {
  check_keys(j,
             {"n_cells", "length", "velocity", "diffusion", "cooling", "t_cool", "beta", "gamma", "t_ref",
              "source_x", "source_t"},
             "reactor");
  ReactorSurrogateConfig c;
  read(j, "n_cells", c.n_cells);
  read(j, "length", c.length);
  read(j, "velocity", c.velocity);
  read(j, "diffusion", c.diffusion);
  read(j, "cooling", c.cooling);
  read(j, "t_cool", c.t_cool);
  read(j, "beta", c.beta);
  read(j, "gamma", c.gamma);
  read(j, "t_ref", c.t_ref);
  read(j, "source_x", c.source_x);
  read(j, "source_t", c.source_t);
  return c;
}

json generate_to_json(const GenerateSpec& g) {
  json j{{"model", to_string(g.model)}, {"t0", g.t0},   {"t1", g.t1},  {"samples", g.samples},
         {"integrator", to_string(g.integrator)}, {"rtol", g.rtol}, {"atol", g.atol}};
  if (g.model == FomKind::kBurgers) {
    j["burgers"] = burgers_to_json(g.burgers);
  } else {
    j["reactor"] = reactor_to_json(g.reactor);
  }
  return j;
}

GenerateSpec generate_from_json(const json& j) {
  check_keys(j, {"model", "burgers", "reactor", "t0", "t1", "samples", "integrator", "rtol", "atol"},
             "dataset.generate");
  GenerateSpec g;
  if (j.contains("model")) g.model = parse_fom_kind(j.at("model").get<std::string>());
  if (j.contains("burgers")) g.burgers = burgers_from_json(j.at("burgers"));
  if (j.contains("reactor")) g.reactor = reactor_from_json(j.at("reactor"));
  read(j, "t0", g.t0);
  read(j, "t1", g.t1);
  read(j, "samples", g.samples);
  if (j.contains("integrator")) g.integrator = parse_fom_integrator(j.at("integrator").get<std::string>());
  read(j, "rtol", g.rtol);
  read(j, "atol", g.atol);
  return g;
}

json grid_to_json(const GridSpec& g) { return {{"t0", g.t0}, {"t1", g.t1}, {"samples", g.samples}}; }

GridSpec grid_from_json(const json& j) {
  check_keys(j, {"t0", "t1", "samples"}, "evaluation");
  GridSpec g;
  read(j, "t0", g.t0);
  read(j, "t1", g.t1);
  read(j, "samples", g.samples);
  return g;
}

json solver_to_json(const SolverConfig& s) {
  const auto& g = s.gradient;
  return {{"backend", to_string(s.backend)},
          {"tsvd_rank", optional_json(s.tsvd_rank)},
          {"tsvd_energy", optional_json(s.tsvd_energy)},
          {"alpha_A", s.alpha_A},
          {"alpha_H", s.alpha_H},
          {"alpha_C", s.alpha_C},
          {"gradient",
           {{"max_epochs", g.max_epochs},
            {"patience", g.patience},
            {"lr_min", g.lr_min},
            {"lr_max", g.lr_max},
            {"half_cycle", g.half_cycle},
            {"epsilon", g.epsilon},
            {"init_jitter", g.init_jitter}}}};
}

SolverConfig solver_from_json(const json& j) {
  check_keys(j, {"backend", "tsvd_rank", "tsvd_energy", "alpha_A", "alpha_H", "alpha_C", "gradient"}, "solver");
  SolverConfig s;
  if (j.contains("backend")) s.backend = parse_backend(j.at("backend").get<std::string>());
  if (j.contains("tsvd_rank") && !j.at("tsvd_rank").is_null()) s.tsvd_rank = j.at("tsvd_rank").get<Eigen::Index>();
  if (j.contains("tsvd_energy") && !j.at("tsvd_energy").is_null()) s.tsvd_energy = j.at("tsvd_energy").get<double>();
  read(j, "alpha_A", s.alpha_A);
  read(j, "alpha_H", s.alpha_H);
  read(j, "alpha_C", s.alpha_C);
  if (j.contains("gradient")) {
    const auto& g = j.at("gradient");
    check_keys(g, {"max_epochs", "patience", "lr_min", "lr_max", "half_cycle", "epsilon", "init_jitter"},
               "solver.gradient");
    read(g, "max_epochs", s.gradient.max_epochs);
    read(g, "patience", s.gradient.patience);
    read(g, "lr_min", s.gradient.lr_min);
    read(g, "lr_max", s.gradient.lr_max);
    read(g, "half_cycle", s.gradient.half_cycle);
    read(g, "epsilon", s.gradient.epsilon);
    read(g, "init_jitter", s.gradient.init_jitter);
  }
  return s;
}

json basis_to_json(const BasisOptions& b) {
  json j{{"blockwise", b.blockwise}, {"center", b.center}};
  if (b.rule.kind == RankRule::Kind::kEnergy) {
    j["theta"] = b.rule.theta;
  } else if (!b.rule.block_ranks.empty()) {
    j["block_ranks"] = b.rule.block_ranks;
  } else {
    j["rank"] = b.rule.rank;
  }
  return j;
}

BasisOptions basis_from_json(const json& j) {
  check_keys(j, {"theta", "rank", "block_ranks", "blockwise", "center"}, "basis");
  BasisOptions b;
  read(j, "blockwise", b.blockwise);
  read(j, "center", b.center);
  const int rules = int(j.contains("theta")) + int(j.contains("rank")) + int(j.contains("block_ranks"));
  if (rules > 1) fail_validation("config: basis takes only one of theta, rank, block_ranks");
  if (j.contains("block_ranks")) {
    b.rule = RankRule::fixed(j.at("block_ranks").get<std::map<std::string, std::size_t>>());
  } else if (j.contains("rank")) {
    b.rule = RankRule::fixed(j.at("rank").get<std::size_t>());
  } else if (j.contains("theta")) {
    b.rule = RankRule::energy(j.at("theta").get<double>());
  }
  return b;
}

json simulation_to_json(const IntegrateOptions& o) {
  return {{"method", to_string(o.method)},
          {"rtol", o.rtol},
          {"atol", o.atol},
          {"max_step", optional_json(o.max_step)},
          {"divergence_bound", o.divergence_bound}};
}

IntegrateOptions simulation_from_json(const json& j) {
  check_keys(j, {"method", "rtol", "atol", "max_step", "divergence_bound"}, "simulation");
  IntegrateOptions o;
  if (j.contains("method")) o.method = parse_integration_method(j.at("method").get<std::string>());
  read(j, "rtol", o.rtol);
  read(j, "atol", o.atol);
  if (j.contains("max_step") && !j.at("max_step").is_null()) o.max_step = j.at("max_step").get<double>();
  read(j, "divergence_bound", o.divergence_bound);
  return o;
}

json config_to_json(const PipelineConfig& c) {
  json dataset = json::object();
  if (c.dataset.generate) dataset["generate"] = generate_to_json(*c.dataset.generate);
  if (c.dataset.file) dataset["file"] = c.dataset.file->string();
  if (c.dataset.layout) dataset["layout"] = c.dataset.layout->string();
  return {{"dataset", dataset},
          {"scaling", to_string(c.scaling)},
          {"derivatives", derivative_scheme_name(c.derivatives)},
          {"basis", basis_to_json(c.basis)},
          {"solver", solver_to_json(c.solver)},
          {"simulation", simulation_to_json(c.simulation)},
          {"evaluation", c.evaluation ? grid_to_json(*c.evaluation) : json(nullptr)},
          {"output", c.output.string()},
          {"seed", c.seed}};
}

json errors_to_json(const TrajectoryError& e) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json per_block = json::object();
  for (const auto& [name, v] : e.per_block) per_block[name] = num(v);
  return {{"overall", num(e.overall)}, {"per_block", per_block}};
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail_io("cannot create " + dir.string() + ": " + ec.message());
}

// Reduced regression problem of `ds` under a given scaling and basis.
RegressionProblem build_problem(const SnapshotDataset& ds, const ScalingTransform& scaling,
                                const PodBasis& basis, DerivativeScheme scheme) {
  SnapshotDataset scaled = apply_scaling(ds, scaling);
  if (!scaled.has_derivatives()) scaled = estimate_derivatives(scaled, scheme);
  return assemble_problem(project(scaled, basis));
}

std::map<std::string, std::size_t> block_ranks(const PodBasis& basis) {
  std::map<std::string, std::size_t> out;
  for (const auto& b : basis.blocks()) out[b.name] = b.rank;
  return out;
}

Trajectory as_trajectory(const SnapshotDataset& ds) {
  return {ds.grid(), ds.states(), false, std::nullopt, 0};
}

}  // namespace

// ---- config ----

void PipelineConfig::validate() const {
  const int sources = int(dataset.generate.has_value()) + int(dataset.file.has_value());
  require(sources == 1, "config: dataset needs exactly one of 'generate' or 'file'");
  if (dataset.generate) dataset.generate->validate();
  basis.rule.validate();
  solver.validate();
  require(simulation.rtol > 0.0 && simulation.atol > 0.0, "config: simulation tolerances must be positive");
  if (simulation.max_step) require(*simulation.max_step > 0.0, "config: simulation max_step must be positive");
  if (evaluation) {
    require(evaluation->samples >= 2 && evaluation->t1 > evaluation->t0,
            "config: evaluation grid needs t0 < t1 and at least 2 samples");
  }
  require(!output.empty(), "config: output directory must not be empty");
}

PipelineConfig parse_pipeline_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail_validation(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  try {
    check_keys(j, {"dataset", "scaling", "derivatives", "basis", "solver", "simulation", "evaluation", "output", "seed"},
               "config");
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, {"generate", "file", "layout"}, "dataset");
      if (d.contains("generate")) c.dataset.generate = generate_from_json(d.at("generate"));
      auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
      };
      if (d.contains("file")) c.dataset.file = resolve(d.at("file").get<std::string>());
      if (d.contains("layout")) c.dataset.layout = resolve(d.at("layout").get<std::string>());
    }
    if (j.contains("scaling")) c.scaling = parse_scaling_mode(j.at("scaling").get<std::string>());
    if (j.contains("derivatives")) c.derivatives = parse_derivative_scheme(j.at("derivatives").get<std::string>());
    if (j.contains("basis")) c.basis = basis_from_json(j.at("basis"));
    if (j.contains("solver")) c.solver = solver_from_json(j.at("solver"));
    if (j.contains("simulation")) c.simulation = simulation_from_json(j.at("simulation"));
    if (j.contains("evaluation") && !j.at("evaluation").is_null()) c.evaluation = grid_from_json(j.at("evaluation"));
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    fail_validation(std::string("config: ") + e.what());
  }
  c.solver.gradient.seed = c.seed;
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_pipeline_config(text.str(), path.parent_path());
}

std::string to_json(const PipelineConfig& cfg) { return config_to_json(cfg).dump(); }

ArtifactPaths artifact_paths(const PipelineConfig& cfg) {
  std::filesystem::path root = cfg.output;
  if (root.is_relative()) {
    if (const char* env = std::getenv(kOutputRootEnv); env && *env) root = std::filesystem::path(env) / root;
  }
  ArtifactPaths p;
  p.root = root;
  p.data_csv = root / "data" / "snapshots.csv";
  p.layout_json = root / "data" / "snapshots.layout.json";
  p.generation_json = root / "data" / "generation.json";
  p.model_dir = root / "model";
  p.fit_json = root / "fit.json";
  p.rom_csv = root / "rom" / "trajectory.csv";
  p.simulation_json = root / "rom" / "simulation.json";
  p.report_json = root / "report" / "report.json";
  p.error_csv = root / "report" / "error_per_time.csv";
  p.plot_csv = root / "report" / "plot.csv";
  return p;
}

// ---- fit / evaluate ----

FittedRom fit_rom(const SnapshotDataset& ds, const PipelineConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  const ScalingTransform scaling = fit_scaling(ds, cfg.scaling);
  SnapshotDataset scaled = apply_scaling(ds, scaling);
  if (!scaled.has_derivatives()) scaled = estimate_derivatives(scaled, cfg.derivatives);
  PodBasis basis = compute_basis(scaled, cfg.basis);
  const RegressionProblem problem = assemble_problem(project(scaled, basis));

  SolverConfig solver = cfg.solver;
  solver.gradient.seed = cfg.seed;
  FitResult fit;
  std::optional<StableFitResult> stable;
  switch (solver.backend) {
    case Backend::kTsvd:
      fit = solve_tsvd(problem, solver);
      break;
    case Backend::kTikhonov:
      fit = solve_tikhonov(problem, solver);
      break;
    case Backend::kStableGradient:
      stable = solve_stable(problem, solver);
      fit = stable->fit;
      break;
  }

  json meta{{"backend", to_string(fit.backend_used)},
            {"requested_backend", to_string(solver.backend)},
            {"solver", solver_to_json(solver)},
            {"residual", fit.residual},
            {"fell_back_to_tsvd", fit.fell_back_to_tsvd},
            {"tsvd_rank_used", fit.tsvd_rank_used},
            {"note", fit.note},
            {"seed", cfg.seed}};
  if (stable) {
    meta["stable"] = {{"loss", stable->loss},
                      {"initial_loss", stable->initial_loss},
                      {"epochs", stable->epochs},
                      {"diverged", stable->diverged},
                      {"diagnostic", stable->diagnostic}};
  }
  FittedRom out{RomModel{fit.ops, std::move(basis), scaling, meta.dump()}, std::move(fit), std::move(stable), 0.0};
  out.model.validate();
  out.seconds = seconds_since(started);
  return out;
}

std::optional<double> RunReport::time_ratio() const {
  if (!fom_seconds || *fom_seconds <= 0.0) return std::nullopt;
  return rom_seconds / *fom_seconds;
}

RunReport evaluate_rom(const RomModel& model, const SnapshotDataset& truth, const IntegrateOptions& options,
                       RomSimulation* simulation) {
  RunReport report;
  report.ranks = block_ranks(model.basis);
  report.energy = model.basis.captured_energy();
  report.max_real_eigenvalue = model.ops.max_real_eigenvalue();
  const json meta = json::parse(model.metadata_json);
  report.backend = meta.value("backend", std::string("unknown"));
  report.residual = meta.value("residual", 0.0);
  report.fell_back_to_tsvd = meta.value("fell_back_to_tsvd", false);

  const auto started = std::chrono::steady_clock::now();
  RomSimulation sim = simulate_rom(model, truth.states().col(0), truth.grid(), options);
  report.rom_seconds = seconds_since(started);
  report.diverged = sim.full.diverged;
  report.diverged_at = sim.full.diverged_at;
  report.errors = trajectory_error(as_trajectory(truth), sim.full, truth.layout());
  if (simulation) *simulation = std::move(sim);
  return report;
}

std::string to_json(const RunReport& r) {
  json ranks = r.ranks;
  std::size_t total = 0;
  for (const auto& [name, k] : r.ranks) total += k;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j{{"ranks", ranks},
         {"total_rank", total},
         {"energy", r.energy},
         {"residual", num(r.residual)},
         {"backend", r.backend},
         {"fell_back_to_tsvd", r.fell_back_to_tsvd},
         {"errors", errors_to_json(r.errors)},
         {"spectrum", {{"max_real_eigenvalue", num(r.max_real_eigenvalue)}}},
         {"rom", {{"diverged", r.diverged}, {"diverged_at", optional_json(r.diverged_at)}}},
         {"timings",
          {{"fom_seconds", optional_json(r.fom_seconds)},
           {"fit_seconds", r.fit_seconds},
           {"rom_seconds", r.rom_seconds},
           {"rom_over_fom", optional_json(r.time_ratio())}}}};
  j["errors"]["per_time_csv"] = "error_per_time.csv";
  j["config"] = json::parse(r.config_json);
  return j.dump(2);
}

// ---- stages ----

FomRun cmd_generate(const PipelineConfig& cfg) {
  cfg.validate();
  if (!cfg.dataset.generate) fail_validation("generate: config has no 'dataset.generate' section");
  const auto paths = artifact_paths(cfg);
  FomRun run = generate_dataset(*cfg.dataset.generate);
  ensure_dir(paths.data_csv.parent_path());
  save_dataset(paths.data_csv, run.data);
  save_layout(paths.layout_json, describe(run.data, paths.data_csv));
  detail::write_json(paths.generation_json, {{"generate", generate_to_json(*cfg.dataset.generate)},
                                             {"seconds", run.seconds},
                                             {"steps", run.steps}});
  return run;
}

SnapshotDataset load_pipeline_dataset(const PipelineConfig& cfg) {
  if (cfg.dataset.file) {
    auto layout = cfg.dataset.layout.value_or([&] {
      auto p = *cfg.dataset.file;
      p.replace_filename(p.stem().string() + ".layout.json");
      return p;
    }());
    return load_dataset(*cfg.dataset.file, load_layout(layout));
  }
  const auto paths = artifact_paths(cfg);
  if (!std::filesystem::exists(paths.data_csv)) {
    fail_io("no generated dataset at " + paths.data_csv.string() + "; run 'generate' first");
  }
  return load_dataset(paths.data_csv, load_layout(paths.layout_json));
}

FittedRom cmd_fit(const PipelineConfig& cfg) {
  cfg.validate();
  const auto paths = artifact_paths(cfg);
  const SnapshotDataset ds = load_pipeline_dataset(cfg);
  FittedRom fitted = fit_rom(ds, cfg);
  save_model(paths.model_dir, fitted.model);
  json frag{{"ranks", block_ranks(fitted.model.basis)},
            {"energy", fitted.model.basis.captured_energy()},
            {"residual", fitted.fit.residual},
            {"backend", to_string(fitted.fit.backend_used)},
            {"fell_back_to_tsvd", fitted.fit.fell_back_to_tsvd},
            {"max_real_eigenvalue", fitted.fit.ops.max_real_eigenvalue()},
            {"timings", {{"fit_seconds", fitted.seconds}}},
            {"config", config_to_json(cfg)}};
  if (fitted.stable) frag["stable_loss"] = fitted.stable->loss;
  detail::write_json(paths.fit_json, frag);
  return fitted;
}

namespace {

TimeGrid evaluation_grid(const PipelineConfig& cfg, const SnapshotDataset& ds) {
  return cfg.evaluation ? cfg.evaluation->grid() : ds.grid();
}

}  // namespace

RomSimulation cmd_simulate(const PipelineConfig& cfg) {
  cfg.validate();
  const auto paths = artifact_paths(cfg);
  const RomModel model = load_model(paths.model_dir);
  const SnapshotDataset ds = load_pipeline_dataset(cfg);
  const auto started = std::chrono::steady_clock::now();
  RomSimulation sim = simulate_rom(model, ds.states().col(0), evaluation_grid(cfg, ds), cfg.simulation);
  const double secs = seconds_since(started);
  ensure_dir(paths.rom_csv.parent_path());
  save_dataset(paths.rom_csv, SnapshotDataset(sim.full.values, sim.full.grid, model.basis.state_layout()));
  detail::write_json(paths.simulation_json, {{"diverged", sim.full.diverged},
                                             {"diverged_at", optional_json(sim.full.diverged_at)},
                                             {"steps", sim.reduced.steps},
                                             {"timings", {{"rom_seconds", secs}}}});
  return sim;
}

RunReport cmd_evaluate(const PipelineConfig& cfg) {
  cfg.validate();
  const auto paths = artifact_paths(cfg);
  const RomModel model = load_model(paths.model_dir);
  SnapshotDataset truth = load_pipeline_dataset(cfg);
  std::optional<double> fom_seconds;
  if (std::filesystem::exists(paths.generation_json)) {
    fom_seconds = detail::read_json(paths.generation_json).at("seconds").get<double>();
  }
  if (cfg.evaluation && !(cfg.evaluation->grid() == truth.grid())) {
    if (!cfg.dataset.generate) {
      fail_validation("evaluate: an evaluation grid different from the data grid needs a 'generate' source");
    }
    FomRun run = generate_dataset(*cfg.dataset.generate, cfg.evaluation->grid());
    fom_seconds = run.seconds;
    truth = std::move(run.data);
  }

  RomSimulation sim{{truth.grid(), Matrix(), false, std::nullopt, 0}, {truth.grid(), Matrix(), false, std::nullopt, 0}};
  RunReport report = evaluate_rom(model, truth, cfg.simulation, &sim);
  report.fom_seconds = fom_seconds;
  if (std::filesystem::exists(paths.fit_json)) {
    report.fit_seconds = detail::read_json(paths.fit_json).at("timings").at("fit_seconds").get<double>();
  }
  report.config_json = config_to_json(cfg).dump();

  ensure_dir(paths.rom_csv.parent_path());
  ensure_dir(paths.report_json.parent_path());
  save_dataset(paths.rom_csv, SnapshotDataset(sim.full.values, sim.full.grid, model.basis.state_layout()));

  const auto& t = truth.grid().instants();
  Matrix err_rows(static_cast<Eigen::Index>(t.size()), 2);
  for (std::size_t k = 0; k < t.size(); ++k) {
    err_rows(static_cast<Eigen::Index>(k), 0) = t[k];
    err_rows(static_cast<Eigen::Index>(k), 1) = report.errors.per_time(static_cast<Eigen::Index>(k));
  }
  write_csv(paths.error_csv, {"t", "error"}, err_rows);

  // Tidy plot data: one row per (t, cell, series); series is "<source>:<block>".
  {
    std::ofstream out(paths.plot_csv);
    if (!out) fail_io("cannot write " + paths.plot_csv.string());
    out << "t,z,value,series\n";
    const auto& layout = truth.layout();
    for (const auto& [source, values] :
         {std::pair<std::string, const Matrix*>{"fom", &truth.states()}, {"rom", &sim.full.values}}) {
      for (const auto& b : layout.blocks()) {
        for (Eigen::Index k = 0; k < values->cols(); ++k) {
          for (Eigen::Index i = 0; i < b.rows; ++i) {
            out << format_double(t[static_cast<std::size_t>(k)]) << ',' << i << ','
                << format_double((*values)(b.offset + i, k)) << ',' << source << ':' << b.name << '\n';
          }
        }
      }
    }
    if (!out) fail_io("write failed for " + paths.plot_csv.string());
  }

  std::ofstream rep(paths.report_json);
  if (!rep) fail_io("cannot write " + paths.report_json.string());
  rep << to_json(report) << '\n';
  return report;
}

ReportCheck cmd_report(const PipelineConfig& cfg) {
  cfg.validate();
  const auto paths = artifact_paths(cfg);
  const json stored = detail::read_json(paths.report_json);
  const RomModel model = load_model(paths.model_dir);
  SnapshotDataset truth = load_pipeline_dataset(cfg);
  if (cfg.evaluation && !(cfg.evaluation->grid() == truth.grid())) {
    if (!cfg.dataset.generate) fail_validation("report: evaluation grid needs a 'generate' source");
    truth = generate_dataset(*cfg.dataset.generate, cfg.evaluation->grid()).data;
  }
  const SnapshotDataset rom = load_dataset(paths.rom_csv, describe(truth.without_derivatives(), paths.rom_csv));

  ReportCheck check;
  RunReport& r = check.report;
  r.ranks = block_ranks(model.basis);
  r.energy = model.basis.captured_energy();
  r.max_real_eigenvalue = model.ops.max_real_eigenvalue();
  const json meta = json::parse(model.metadata_json);
  r.backend = meta.value("backend", std::string("unknown"));
  r.fell_back_to_tsvd = meta.value("fell_back_to_tsvd", false);
  // The residual is recomputed from the training data, not read back from the model.
  const SnapshotDataset train = load_pipeline_dataset(cfg);
  r.residual = residual(build_problem(train, model.scaling, model.basis, cfg.derivatives), model.ops);
  r.errors = trajectory_error(as_trajectory(truth), as_trajectory(rom), truth.layout());
  r.diverged = !rom.states().allFinite();
  r.config_json = stored.at("config").dump();
  const auto& timings = stored.at("timings");
  if (!timings.at("fom_seconds").is_null()) r.fom_seconds = timings.at("fom_seconds").get<double>();
  r.fit_seconds = timings.at("fit_seconds").get<double>();
  r.rom_seconds = timings.at("rom_seconds").get<double>();

  auto compare = [&](const std::string& name, const json& reported, double recomputed) {
    double diff = 0.0;
    if (reported.is_null()) {
      diff = std::isfinite(recomputed) ? std::numeric_limits<double>::infinity() : 0.0;
    } else {
      diff = std::abs(reported.get<double>() - recomputed);
    }
    check.discrepancies[name] = diff;
    check.max_discrepancy = std::max(check.max_discrepancy, diff);
  };
  compare("residual", stored.at("residual"), r.residual);
  compare("max_real_eigenvalue", stored.at("spectrum").at("max_real_eigenvalue"), r.max_real_eigenvalue);
  compare("errors.overall", stored.at("errors").at("overall"), r.errors.overall);
  for (const auto& [name, v] : r.errors.per_block) {
    compare("errors.per_block." + name, stored.at("errors").at("per_block").at(name), v);
  }
  for (const auto& [name, v] : r.energy) compare("energy." + name, stored.at("energy").at(name), v);
  for (const auto& [name, k] : r.ranks) {
    compare("ranks." + name, stored.at("ranks").at(name), static_cast<double>(k));
  }
  const CsvTable per_time = read_csv(paths.error_csv);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < per_time.rows.rows(); ++k) {
    const double a = per_time.rows(k, 1);
    const double b = r.errors.per_time(k);
    if (std::isfinite(a) || std::isfinite(b)) worst = std::max(worst, std::abs(a - b));
  }
  check.discrepancies["errors.per_time"] = worst;
  check.max_discrepancy = std::max(check.max_discrepancy, worst);
  return check;
}

}  // namespace opinf
