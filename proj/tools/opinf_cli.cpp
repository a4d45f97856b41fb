// opinf: generate -> fit -> simulate -> evaluate -> report from a JSON config.
//
// Exit codes: 0 success, 2 validation, 3 numerical failure (including a diverged
// ROM at evaluate), 4 I/O, 1 anything unexpected.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "opinf/error.hpp"
#include "opinf/pipeline.hpp"

namespace {

using nlohmann::json;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

int exit_code(opinf::ErrorKind kind) {
  switch (kind) {
    case opinf::ErrorKind::kValidation:
      return kExitValidation;
    case opinf::ErrorKind::kNumerical:
      return kExitNumerical;
    case opinf::ErrorKind::kIo:
      return kExitIo;
  }
  return kExitNumerical;
}

// Command-line values for PipelineConfig fields. Each maps onto a JSON pointer.
struct Flags {
  std::string config_path;
  bool override_config = false;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scaling;
  std::optional<double> theta;
  std::optional<std::size_t> rank;
  std::optional<std::string> block_ranks;  // "X=2,T=5"
  std::optional<bool> blockwise;
  std::optional<std::string> backend;
  std::optional<double> alpha_a;
  std::optional<double> alpha_h;
  std::optional<double> alpha_c;
  std::optional<long> tsvd_rank;
  std::optional<std::string> method;
  std::optional<std::string> dataset;
  std::optional<std::string> layout;
  std::optional<std::string> model;
};

json parse_block_ranks(const std::string& text) {
  json out = json::object();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) opinf::fail_validation("--ranks expects NAME=R[,NAME=R...]");
    try {
      out[item.substr(0, eq)] = std::stoul(item.substr(eq + 1));
    } catch (const std::exception&) {
      opinf::fail_validation("--ranks: '" + item + "' is not NAME=R");
    }
  }
  return out;
}

// Sets `ptr` unless the config file already holds a value there and --override is absent.
void patch(json& j, const json& from_file, const std::string& ptr, const json& value, bool override_config,
           const std::string& flag) {
  const json::json_pointer p(ptr);
  if (from_file.contains(p) && !override_config) {
    opinf::fail_validation("flag " + flag + " conflicts with '" + ptr +
                           "' in the config file; pass --override to let the flag win");
  }
  j[p] = value;
}

opinf::PipelineConfig build_config(const Flags& f) {
  json file = json::object();
  std::filesystem::path base;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) opinf::fail_io("cannot open config " + f.config_path);
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      opinf::fail_validation("config " + f.config_path + " is not valid JSON: " + e.what());
    }
    base = std::filesystem::path(f.config_path).parent_path();
  }
  json j = file;
  const bool ov = f.override_config;
  if (f.output) patch(j, file, "/output", *f.output, ov, "--output");
  if (f.seed) patch(j, file, "/seed", *f.seed, ov, "--seed");
  if (f.scaling) patch(j, file, "/scaling", *f.scaling, ov, "--scaling");
  if (f.blockwise) patch(j, file, "/basis/blockwise", *f.blockwise, ov, "--blockwise/--global");
  if (f.theta || f.rank || f.block_ranks) {
    if (int(f.theta.has_value()) + int(f.rank.has_value()) + int(f.block_ranks.has_value()) > 1) {
      opinf::fail_validation("give only one of --theta, --rank, --ranks");
    }
    // The three rank rules are mutually exclusive, so any of them replaces the others.
    json& basis = j["basis"];
    for (const char* key : {"theta", "rank", "block_ranks"}) {
      if (file.contains(json::json_pointer(std::string("/basis/") + key))) {
        if (!ov) opinf::fail_validation("rank flags conflict with 'basis' in the config file; pass --override");
      }
      basis.erase(key);
    }
    if (f.theta) basis["theta"] = *f.theta;
    if (f.rank) basis["rank"] = *f.rank;
    if (f.block_ranks) basis["block_ranks"] = parse_block_ranks(*f.block_ranks);
  }
  if (f.backend) patch(j, file, "/solver/backend", *f.backend, ov, "--backend");
  if (f.alpha_a) patch(j, file, "/solver/alpha_A", *f.alpha_a, ov, "--alpha-a");
  if (f.alpha_h) patch(j, file, "/solver/alpha_H", *f.alpha_h, ov, "--alpha-h");
  if (f.alpha_c) patch(j, file, "/solver/alpha_C", *f.alpha_c, ov, "--alpha-c");
  if (f.tsvd_rank) patch(j, file, "/solver/tsvd_rank", *f.tsvd_rank, ov, "--tsvd-rank");
  if (f.method) patch(j, file, "/simulation/method", *f.method, ov, "--method");
  if (f.dataset || f.model) {
    if (file.contains("dataset") && !ov) {
      opinf::fail_validation("dataset flags conflict with 'dataset' in the config file; pass --override");
    }
    if (f.dataset && f.model) opinf::fail_validation("give only one of --dataset and --model");
    j["dataset"] = json::object();
    if (f.dataset) {
      j["dataset"]["file"] = *f.dataset;
      if (f.layout) j["dataset"]["layout"] = *f.layout;
    } else {
      j["dataset"]["generate"] = {{"model", *f.model}};
    }
    // Paths given on the command line are relative to the working directory.
    base.clear();
  }
  return opinf::parse_pipeline_config(j.dump(), base);
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("-c,--config", f.config_path, "pipeline config JSON");
  cmd->add_flag("--override", f.override_config, "let flags replace values set in the config file");
  cmd->add_option("-o,--output", f.output, "output directory (relative paths honor OPINF_OUTPUT_ROOT)");
  cmd->add_option("--seed", f.seed, "seed for all randomness");
  cmd->add_option("--scaling", f.scaling, "none | min-max | mean-std");
  cmd->add_option("--theta", f.theta, "energy threshold for rank selection");
  cmd->add_option("--rank", f.rank, "fixed rank per basis block");
  cmd->add_option("--ranks", f.block_ranks, "fixed ranks per block, e.g. X=2,T=5");
  cmd->add_flag("--blockwise,!--global", f.blockwise, "per-block or global POD basis");
  cmd->add_option("--backend", f.backend, "tsvd | tikhonov | stable-gradient");
  cmd->add_option("--alpha-a", f.alpha_a, "penalty on the linear operator");
  cmd->add_option("--alpha-h", f.alpha_h, "penalty on the quadratic operator");
  cmd->add_option("--alpha-c", f.alpha_c, "penalty on the constant term");
  cmd->add_option("--tsvd-rank", f.tsvd_rank, "truncation rank for the tsvd backend");
  cmd->add_option("--method", f.method, "ROM integrator: rk45-adaptive | rk4-fixed");
  cmd->add_option("--dataset", f.dataset, "snapshot CSV to use instead of generating");
  cmd->add_option("--layout", f.layout, "layout JSON for --dataset");
  cmd->add_option("--model", f.model, "generate from the default burgers or reactor config");
}

void print_report(const opinf::RunReport& r) {
  std::printf("ranks:");
  for (const auto& [name, k] : r.ranks) std::printf(" %s=%zu", name.c_str(), k);
  std::printf("\nresidual: %.6e (%s%s)\n", r.residual, r.backend.c_str(),
              r.fell_back_to_tsvd ? ", fell back to tsvd" : "");
  std::printf("max Re eig(A): %.6e\n", r.max_real_eigenvalue);
  std::printf("error overall: %.6e\n", r.errors.overall);
  for (const auto& [name, v] : r.errors.per_block) std::printf("error %s: %.6e\n", name.c_str(), v);
  if (r.fom_seconds) std::printf("FOM time: %.6f s\n", *r.fom_seconds);
  std::printf("ROM time: %.6f s\n", r.rom_seconds);
  if (auto ratio = r.time_ratio()) std::printf("ROM/FOM time: %.6f\n", *ratio);
  if (r.diverged) std::printf("ROM DIVERGED at t=%.6g\n", r.diverged_at.value_or(0.0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Operator Inference reduced-order modeling pipeline"};
  app.require_subcommand(1);
  Flags flags;
  auto* gen = app.add_subcommand("generate", "run the full-order model and write snapshot data");
  auto* fit = app.add_subcommand("fit", "learn a reduced model from the dataset");
  auto* sim = app.add_subcommand("simulate", "simulate the fitted model and write its trajectory");
  auto* eval = app.add_subcommand("evaluate", "simulate, compare with the data, write the report");
  auto* rep = app.add_subcommand("report", "recompute the report from persisted artifacts");
  auto* run = app.add_subcommand("run", "generate (when configured), fit and evaluate");
  for (auto* cmd : {gen, fit, sim, eval, rep, run}) add_common(cmd, flags);
  bool echo = false;
  for (auto* cmd : {gen, fit, sim, eval, rep, run}) cmd->add_flag("--echo-config", echo, "print the resolved config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const opinf::PipelineConfig cfg = build_config(flags);
    if (echo) std::cout << json::parse(opinf::to_json(cfg)).dump(2) << '\n';
    const auto paths = opinf::artifact_paths(cfg);

    if (gen->parsed() || (run->parsed() && cfg.dataset.generate)) {
      const auto r = opinf::cmd_generate(cfg);
      std::printf("generated %ld x %ld snapshots in %.3f s (%zu steps) -> %s\n", static_cast<long>(r.data.dimension()),
                  static_cast<long>(r.data.snapshot_count()), r.seconds, r.steps, paths.data_csv.c_str());
    }
    if (fit->parsed() || run->parsed()) {
      const auto f = opinf::cmd_fit(cfg);
      std::printf("fitted r=%ld with %s, residual %.6e -> %s\n", static_cast<long>(f.model.basis.rank()),
                  opinf::to_string(f.fit.backend_used).c_str(), f.fit.residual, paths.model_dir.c_str());
      if (!f.fit.note.empty()) std::printf("note: %s\n", f.fit.note.c_str());
    }
    if (sim->parsed()) {
      const auto s = opinf::cmd_simulate(cfg);
      std::printf("simulated %zu instants -> %s\n", s.full.grid.size(), paths.rom_csv.c_str());
      if (s.full.diverged) {
        std::fprintf(stderr, "ROM diverged at t=%.6g\n", s.full.diverged_at.value_or(0.0));
        return kExitNumerical;
      }
    }
    if (eval->parsed() || run->parsed()) {
      const auto r = opinf::cmd_evaluate(cfg);
      print_report(r);
      std::printf("report -> %s\n", paths.report_json.c_str());
      if (r.diverged) return kExitNumerical;
    }
    if (rep->parsed()) {
      const auto check = opinf::cmd_report(cfg);
      print_report(check.report);
      std::printf("max discrepancy vs %s: %.3e\n", paths.report_json.c_str(), check.max_discrepancy);
      if (check.max_discrepancy > 1e-12) {
        for (const auto& [name, d] : check.discrepancies) {
          if (d > 1e-12) std::fprintf(stderr, "mismatch %s: %.3e\n", name.c_str(), d);
        }
        return kExitNumerical;
      }
      if (check.report.diverged) return kExitNumerical;
    }
  } catch (const opinf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
