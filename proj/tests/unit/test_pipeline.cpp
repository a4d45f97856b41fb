#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "opinf/error.hpp"
#include "opinf/pipeline.hpp"
#include "support.hpp"

using namespace opinf;
using nlohmann::json;

namespace {

// A reduced reactor so the end-to-end cases stay fast.
json small_reactor_config(const std::filesystem::path& out) {
  return {{"dataset", {{"generate", {{"model", "reactor"}, {"reactor", {{"n_cells", 40}}}, {"samples", 101}}}}},
          {"basis", {{"theta", 0.999}}},
          {"output", out.string()},
          {"seed", 3}};
}

PipelineConfig parse(const json& j) { return parse_pipeline_config(j.dump()); }

std::string validation_message(const json& j) {
  try {
    parse(j);
  } catch (const Error& e) {
    return e.kind() == ErrorKind::kValidation ? e.what() : "wrong kind";
  }
  return "";
}

json without_timings(json j) {
  if (j.is_object()) {
    for (const char* key : {"seconds", "timings"}) j.erase(key);
    for (auto& [k, v] : j.items()) v = without_timings(v);
  }
  return j;
}

// Every persisted artifact, with wall-clock fields removed from the JSON files.
std::map<std::string, std::string> numeric_artifacts(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root).string();
    const auto text = test::read_text(e.path());
    out[rel] = e.path().extension() == ".json" ? without_timings(json::parse(text)).dump() : text;
  }
  return out;
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(OPINF_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  test::TempDir dir("cfg");
  const auto cfg = parse(small_reactor_config(dir / "out"));
  CHECK(cfg.scaling == ScalingMode::kMinMax);
  CHECK(cfg.basis.blockwise);
  CHECK(cfg.solver.backend == Backend::kTikhonov);
  CHECK(cfg.solver.alpha_H == 1e-4);
  CHECK(cfg.solver.gradient.lr_min == 1e-5);
  CHECK(cfg.solver.gradient.lr_max == 0.5);
  CHECK(cfg.solver.gradient.patience == 500);
  CHECK(cfg.solver.gradient.seed == 3);
  CHECK(cfg.dataset.generate->reactor.n_cells == 40);
  CHECK(cfg.dataset.generate->samples == 101);

  // The echo is complete: parsing it back gives the same echo.
  const auto echo = to_json(cfg);
  CHECK(to_json(parse_pipeline_config(echo)) == echo);
  CHECK(json::parse(echo).at("dataset").at("generate").at("reactor").contains("t_ref"));

  auto j = small_reactor_config(dir / "out");
  j["basis"]["theta"] = 0.0;
  CHECK(validation_message(j).find("theta") != std::string::npos);
  j = small_reactor_config(dir / "out");
  j["solver"] = {{"alpah_H", 1.0}};
  CHECK(validation_message(j).find("alpah_H") != std::string::npos);
  j = small_reactor_config(dir / "out");
  j["extra"] = 1;
  CHECK(validation_message(j).find("extra") != std::string::npos);
  j = small_reactor_config(dir / "out");
  j["dataset"]["file"] = "x.csv";
  CHECK_FALSE(validation_message(j).empty());
  CHECK_FALSE(validation_message(json{{"output", "x"}}).empty());
  CHECK_THROWS_AS(parse_pipeline_config("{not json"), Error);
}

TEST_CASE("output root environment variable") {
  auto cfg = parse(small_reactor_config("relative/run"));
  ::setenv(kOutputRootEnv, "/tmp/somewhere", 1);
  CHECK(artifact_paths(cfg).root == std::filesystem::path("/tmp/somewhere/relative/run"));
  cfg.output = "/abs/run";
  CHECK(artifact_paths(cfg).root == std::filesystem::path("/abs/run"));
  ::unsetenv(kOutputRootEnv);
  cfg.output = "relative/run";
  CHECK(artifact_paths(cfg).root == std::filesystem::path("relative/run"));
}

TEST_CASE("stages: persisted fit equals in-process fit, report recomputes") {
  test::TempDir dir("stages");
  const auto cfg = parse(small_reactor_config(dir / "out"));
  const auto paths = artifact_paths(cfg);

  const auto gen = cmd_generate(cfg);
  CHECK(std::filesystem::exists(paths.data_csv));
  CHECK(std::filesystem::exists(paths.generation_json));
  CHECK(gen.data.layout().at("X").rows == 40);

  const auto persisted = cmd_fit(cfg);
  const auto in_process = fit_rom(generate_dataset(*cfg.dataset.generate).data, cfg);
  CHECK(persisted.model.ops.stacked() == in_process.model.ops.stacked());
  CHECK(persisted.model.basis.V() == in_process.model.basis.V());
  const auto loaded = load_model(paths.model_dir);
  CHECK(loaded.ops.stacked() == persisted.model.ops.stacked());

  const auto sim = cmd_simulate(cfg);
  CHECK(std::filesystem::exists(paths.rom_csv));
  CHECK_FALSE(sim.full.diverged);

  const auto report = cmd_evaluate(cfg);
  CHECK_FALSE(report.diverged);
  CHECK(report.errors.overall < 0.05);
  CHECK(report.fom_seconds.has_value());
  CHECK(report.ranks.size() == 2);
  for (const auto& [name, e] : report.energy) CHECK(e >= 0.999);
  CHECK(std::filesystem::exists(paths.error_csv));
  CHECK(std::filesystem::exists(paths.plot_csv));

  const auto check = cmd_report(cfg);
  CHECK(check.max_discrepancy <= 1e-12);
  CHECK(check.report.errors.overall == report.errors.overall);

  const auto plot = test::read_text(paths.plot_csv);
  CHECK(plot.rfind("t,z,value,series\n", 0) == 0);
  CHECK(plot.find(",fom:T\n") != std::string::npos);
  CHECK(plot.find(",rom:X\n") != std::string::npos);

  SUBCASE("a tampered report is caught") {
    auto j = json::parse(test::read_text(paths.report_json));
    j["errors"]["overall"] = j["errors"]["overall"].get<double>() * (1.0 + 1e-6);
    test::write_text(paths.report_json, j.dump(2));
    CHECK(cmd_report(cfg).max_discrepancy > 1e-12);
  }
}

TEST_CASE("fixed ranks and the stable backend") {
  test::TempDir dir("ranks");
  auto j = small_reactor_config(dir / "out");
  j["basis"] = {{"block_ranks", {{"X", 2}, {"T", 5}}}};
  j["solver"] = {{"backend", "stable-gradient"}, {"gradient", {{"max_epochs", 200}}}};
  const auto cfg = parse(j);
  cmd_generate(cfg);
  const auto fit = cmd_fit(cfg);
  CHECK(fit.model.basis.rank() == 7);
  REQUIRE(fit.stable.has_value());
  const auto report = cmd_evaluate(cfg);
  CHECK(report.ranks.at("X") == 2);
  CHECK(report.ranks.at("T") == 5);
  CHECK(report.max_real_eigenvalue < 0.0);
  CHECK(report.backend == "stable-gradient");
  const auto rj = json::parse(test::read_text(artifact_paths(cfg).report_json));
  CHECK(rj.at("total_rank") == 7);
  CHECK(rj.at("spectrum").at("max_real_eigenvalue").get<double>() < 0.0);
}

TEST_CASE("rerun with the same config is bit-identical") {
  test::TempDir dir("det");
  auto j = small_reactor_config(dir / "out");
  j["solver"] = {{"backend", "stable-gradient"}, {"gradient", {{"max_epochs", 50}, {"init_jitter", 0.01}}}};
  const auto cfg = parse(j);
  auto run = [&] {
    cmd_generate(cfg);
    cmd_fit(cfg);
    cmd_simulate(cfg);
    cmd_evaluate(cfg);
    return numeric_artifacts(artifact_paths(cfg).root);
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.size() >= 10);
  for (const auto& [name, text] : first) {
    CAPTURE(name);
    CHECK(second.at(name) == text);
  }
}

TEST_CASE("file datasets and regenerated evaluation grids") {
  test::TempDir dir("file");
  const auto gen_cfg = parse(small_reactor_config(dir / "gen"));
  cmd_generate(gen_cfg);
  const auto paths = artifact_paths(gen_cfg);

  json j{{"dataset", {{"file", paths.data_csv.string()}}}, {"output", (dir / "fit").string()}};
  const auto cfg = parse(j);
  const auto a = cmd_fit(cfg);
  const auto b = fit_rom(load_pipeline_dataset(gen_cfg), gen_cfg);
  CHECK(a.model.ops.stacked() == b.model.ops.stacked());
  const auto report = cmd_evaluate(cfg);
  CHECK_FALSE(report.fom_seconds.has_value());
  CHECK_FALSE(report.time_ratio().has_value());

  json missing{{"dataset", {{"file", (dir / "nope.csv").string()}}}, {"output", (dir / "x").string()}};
  try {
    cmd_fit(parse(missing));
    FAIL("expected an I/O error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }

  auto k = small_reactor_config(dir / "grid");
  k["evaluation"] = {{"t0", 0.0}, {"t1", 2.0}, {"samples", 41}};
  const auto gcfg = parse(k);
  cmd_generate(gcfg);
  cmd_fit(gcfg);
  const auto r = cmd_evaluate(gcfg);
  CHECK(r.errors.per_time.size() == 41);
  CHECK(cmd_report(gcfg).max_discrepancy <= 1e-12);
}

TEST_CASE("command-line exit codes") {
  test::TempDir dir("cli");
  const auto log = dir / "log.txt";
  const auto cfg_path = dir / "cfg.json";
  test::write_text(cfg_path, small_reactor_config(dir / "out").dump(2));
  const std::string c = "-c " + cfg_path.string();

  CHECK(run_cli("run " + c, log) == 0);
  CHECK(test::read_text(log).find("ROM/FOM time") != std::string::npos);
  CHECK(run_cli("report " + c, log) == 0);
  CHECK(run_cli("simulate " + c, log) == 0);

  // Validation: bad rank rule, unknown subcommand, conflicting flag without --override.
  CHECK(run_cli("fit " + c + " --theta 0", log) == 2);
  CHECK(run_cli("frobnicate", log) == 2);
  CHECK(run_cli("", log) == 2);
  CHECK(run_cli("fit " + c + " --seed 9", log) == 2);
  CHECK(test::read_text(log).find("--override") != std::string::npos);
  CHECK(run_cli("fit " + c + " --seed 9 --override --echo-config", log) == 0);
  CHECK(test::read_text(log).find("\"seed\": 9") != std::string::npos);

  // I/O: missing config, missing dataset file.
  CHECK(run_cli("fit -c " + (dir / "absent.json").string(), log) == 4);
  CHECK(run_cli("fit --dataset " + (dir / "absent.csv").string() + " -o " + (dir / "o2").string(), log) == 4);

  // Numerical: a truncation rank above the data matrix's numerical rank.
  CHECK(run_cli("fit " + c + " --override --backend tsvd --tsvd-rank 18", log) == 3);
  CHECK(test::read_text(log).find("rank deficiency") != std::string::npos);

  // The output root variable prefixes a relative output directory.
  const std::string rel = "run " + c + " --override -o rel/run";
  CHECK(std::system(("OPINF_OUTPUT_ROOT=" + dir.path().string() + " " + std::string(OPINF_CLI_PATH) + " " + rel +
                     " > " + log.string() + " 2>&1")
                        .c_str()) == 0);
  CHECK(std::filesystem::exists(dir / "rel" / "run" / "report" / "report.json"));
}
