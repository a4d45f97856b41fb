#pragma once

#include <functional>
#include <string>

#include <Eigen/SparseCore>

#include "opinf/operators.hpp"
#include "opinf/rom.hpp"
#include "opinf/snapshots.hpp"
#include "opinf/types.hpp"

namespace opinf {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Viscous Burgers' equation u_t + (u^2/2)_z = nu u_zz on (0, L) with Dirichlet data,
/// central differences on n interior nodes z_i = (i + 1) L / (n + 1).
struct BurgersConfig {
  Eigen::Index n = 100;
  double length = 1.0;
  double viscosity = 0.1;
  double left = 0.0;
  double right = 0.0;
  std::string initial = "sine";  // "sine" or "step"
  double amplitude = 1.0;

  void validate() const;
  [[nodiscard]] double spacing() const { return length / static_cast<double>(n + 1); }
};

/// Exact quadratic form of the semi-discretization; H has only diagonal (x_j^2) columns.
QuadraticOperators burgers_rhs_operators(const BurgersConfig& cfg);
Vector burgers_initial_state(const BurgersConfig& cfg);

/// Two-field plug-flow reactor surrogate on n cells per field, state packed [X; T].
/// Coefficients are made up to give a start-up with ignition inside the domain.
struct ReactorSurrogateConfig {
  Eigen::Index n_cells = 200;
  double length = 1.0;
  double velocity = 1.0;
  double diffusion = 0.02;  // thermal dispersion, T only
  double cooling = 5.0;
  double t_cool = 550.0;
  double beta = 2.0;        // source amplitude
  double gamma = 0.02;      // activation steepness, 1/K
  double t_ref = 570.0;
  double source_x = 1.0;    // source weight in the conversion balance
  double source_t = 800.0;  // adiabatic-rise weight in the energy balance, K

  void validate() const;
  [[nodiscard]] double spacing() const { return length / static_cast<double>(n_cells); }
};

/// beta (1 - X) / (1 + exp(-gamma (T - T_ref)))
double reactor_source(const ReactorSurrogateConfig& cfg, double x, double t);

Vector reactor_rhs(const ReactorSurrogateConfig& cfg, const Vector& state);
SparseMatrix reactor_jacobian(const ReactorSurrogateConfig& cfg, const Vector& state);
/// Start-up condition: X = 0, T = T_cool.
Vector reactor_initial_state(const ReactorSurrogateConfig& cfg);
BlockLayout reactor_layout(const ReactorSurrogateConfig& cfg);

/// Right-hand side with a sparse Jacobian; what the implicit solver needs.
struct OdeSystem {
  std::function<Vector(const Vector&)> rhs;
  std::function<SparseMatrix(const Vector&)> jacobian;
};

OdeSystem quadratic_system(const QuadraticOperators& ops);
OdeSystem reactor_system(const ReactorSurrogateConfig& cfg);

struct ImplicitOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  double initial_step = 0.0;  // 0 picks one from the initial slope
  std::size_t max_steps = 1'000'000;
};

/// Adaptive TR-BDF2 (L-stable, stiffly accurate, embedded 3rd-order error estimate).
/// Steps are shortened to land on every grid instant. Step-size underflow throws a
/// numerical error naming the last accepted time.
Trajectory integrate_trbdf2(const OdeSystem& sys, const Vector& x0, const TimeGrid& grid,
                            const ImplicitOptions& options = {});

enum class FomIntegrator { kImplicitTrbdf, kRk45Adaptive };

FomIntegrator parse_fom_integrator(const std::string& name);
std::string to_string(FomIntegrator integrator);

enum class FomKind { kBurgers, kReactor };

FomKind parse_fom_kind(const std::string& name);
std::string to_string(FomKind kind);

struct GenerateSpec {
  FomKind model = FomKind::kReactor;
  BurgersConfig burgers;
  ReactorSurrogateConfig reactor;
  double t0 = 0.0;
  double t1 = 2.0;
  std::size_t samples = 201;
  FomIntegrator integrator = FomIntegrator::kImplicitTrbdf;
  double rtol = 1e-6;
  double atol = 1e-8;

  void validate() const;
  [[nodiscard]] TimeGrid grid() const { return TimeGrid::uniform(t0, t1, samples); }
};

struct FomRun {
  SnapshotDataset data;
  double seconds = 0.0;  // integration plus derivative evaluation
  std::size_t steps = 0;
};

/// Integrates the chosen FOM and stores the exact right-hand side at every output
/// instant as the derivative data.
FomRun generate_dataset(const GenerateSpec& spec, const TimeGrid& grid);
inline FomRun generate_dataset(const GenerateSpec& spec) { return generate_dataset(spec, spec.grid()); }

/// The chosen FOM as an ODE system, and its start-up state.
OdeSystem fom_system(const GenerateSpec& spec);
Vector fom_initial_state(const GenerateSpec& spec);
BlockLayout fom_layout(const GenerateSpec& spec);

}  // namespace opinf
