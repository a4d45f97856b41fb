#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "opinf/operators.hpp"
#include "opinf/snapshots.hpp"
#include "opinf/types.hpp"

namespace opinf {

/// Data matrix D = [X; X⊗X; 1^T] and derivative targets for the reduced regression.
struct RegressionProblem {
  Matrix D;       // (r + r^2 + 1) x (k + 1)
  Matrix target;  // r x (k + 1)
  TimeGrid grid;

  [[nodiscard]] Eigen::Index dimension() const noexcept { return target.rows(); }
  /// The reduced states, i.e. the first r rows of D.
  [[nodiscard]] auto states() const { return D.topRows(target.rows()); }
};

RegressionProblem assemble_problem(const SnapshotDataset& reduced);

enum class Backend { kTsvd, kTikhonov, kStableGradient };

Backend parse_backend(const std::string& name);
std::string to_string(Backend backend);

struct GradientOptions {
  std::size_t max_epochs = 20000;
  /// Stop after this many epochs without a relative loss improvement above 1e-6.
  std::size_t patience = 500;
  double lr_min = 1e-5;
  double lr_max = 0.5;
  /// Epochs from the bottom to the top of one learning-rate triangle.
  std::size_t half_cycle = 500;
  std::uint64_t seed = 0;
  /// Floor added to the SPD factors of the stable parameterization.
  double epsilon = 1e-8;
  /// Scale of random jitter added to the initial parameters (0 disables).
  double init_jitter = 0.0;
};

struct SolverConfig {
  Backend backend = Backend::kTikhonov;
  /// Truncation rank for the tsvd backend; unset keeps every singular value
  /// above the numerical-rank cutoff.
  std::optional<Eigen::Index> tsvd_rank;
  /// Alternatively, keep the smallest rank whose squared-singular-value energy reaches this.
  std::optional<double> tsvd_energy;
  double alpha_A = 0.0;
  double alpha_H = 1e-4;
  double alpha_C = 0.0;
  GradientOptions gradient;

  void validate() const;
};

/// Solver output plus what was actually done to produce it.
struct FitResult {
  QuadraticOperators ops;
  Backend backend_used = Backend::kTikhonov;
  bool fell_back_to_tsvd = false;
  Eigen::Index tsvd_rank_used = 0;
  double residual = 0.0;
  std::string note;
};

/// Relative numerical-rank cutoff on the singular values of D.
inline constexpr double kRankCutoff = 1e-12;

FitResult solve_tsvd(const RegressionProblem& p, const SolverConfig& cfg);
FitResult solve_tikhonov(const RegressionProblem& p, const SolverConfig& cfg);

/// ||target - [A H C] D||_F / ||target||_F; the absolute norm when the target is zero.
double residual(const RegressionProblem& p, const QuadraticOperators& ops);

/// Header fields stored next to the operator payloads.
struct OperatorFileInfo {
  std::string backend;
  std::string config_json = "{}";  // solver configuration echo
  double residual = 0.0;
};

/// Writes operators.json plus A.csv, H.csv, C.csv into `dir` (created if needed).
void save_operators(const std::filesystem::path& dir, const QuadraticOperators& ops,
                    const OperatorFileInfo& info);
QuadraticOperators load_operators(const std::filesystem::path& dir, OperatorFileInfo* info = nullptr);

}  // namespace opinf
