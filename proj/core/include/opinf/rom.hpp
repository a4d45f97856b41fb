#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "opinf/operators.hpp"
#include "opinf/pod.hpp"
#include "opinf/snapshots.hpp"
#include "opinf/types.hpp"

namespace opinf {

/// A x + H (x ⊗ x) + C, contracting H block by block instead of forming x ⊗ x.
Vector rhs(const QuadraticOperators& ops, const Eigen::Ref<const Vector>& x);

/// Same value through the explicit Kronecker square; kept as a cross-check.
Vector rhs_kronecker(const QuadraticOperators& ops, const Eigen::Ref<const Vector>& x);

enum class IntegrationMethod { kRk4Fixed, kRk45Adaptive };

IntegrationMethod parse_integration_method(const std::string& name);
std::string to_string(IntegrationMethod method);

struct IntegrateOptions {
  IntegrationMethod method = IntegrationMethod::kRk45Adaptive;
  /// rk4-fixed substep cap; unset means the smallest grid spacing.
  std::optional<double> max_step;
  double rtol = 1e-8;
  double atol = 1e-10;
  /// Any |x_i| above this stops the integration and flags the trajectory.
  double divergence_bound = 1e12;
  std::size_t max_steps = 5'000'000;
};

struct Trajectory {
  TimeGrid grid;
  Matrix values;  // d x (k+1); columns past a divergence are NaN
  bool diverged = false;
  std::optional<double> diverged_at;
  std::size_t steps = 0;
};

Trajectory integrate(const QuadraticOperators& ops, const Vector& x0, const TimeGrid& grid,
                     const IntegrateOptions& options = {});

/// Learned reduced model together with what is needed to map to and from full coordinates.
struct RomModel {
  QuadraticOperators ops;
  PodBasis basis;
  ScalingTransform scaling;
  std::string metadata_json = "{}";

  void validate() const;
};

struct RomSimulation {
  Trajectory reduced;
  Trajectory full;
};

RomSimulation simulate_rom(const RomModel& model, const Vector& x0_full, const TimeGrid& grid,
                           const IntegrateOptions& options = {});

struct TrajectoryError {
  double overall = 0.0;
  std::map<std::string, double> per_block;
  Vector per_time;  // ||truth_i - approx_i||_2 per instant
};

/// Relative Frobenius errors; per-block entries use `layout` when given.
TrajectoryError trajectory_error(const Trajectory& truth, const Trajectory& approx,
                                 const std::optional<BlockLayout>& layout = std::nullopt);

/// Model directory: operators/ (see save_operators), basis.csv, basis.json, model.json.
void save_model(const std::filesystem::path& dir, const RomModel& model);
RomModel load_model(const std::filesystem::path& dir);

}  // namespace opinf
