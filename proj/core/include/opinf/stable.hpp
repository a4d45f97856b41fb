#pragma once

#include <optional>
#include <string>

#include "opinf/opinf.hpp"
#include "opinf/operators.hpp"
#include "opinf/types.hpp"

namespace opinf {

/// Operators whose linear part is A = (J - R) Q with J skew-symmetric and
/// R = L_R L_R^T + eps I, Q = L_Q L_Q^T + eps I symmetric positive definite.
/// x^T Q x is then a Lyapunov function of dx/dt = A x, so A is Hurwitz for
/// every parameter value.
struct StableParameterization {
  Matrix J;         // skew-symmetric, d x d
  Matrix R_factor;  // lower triangular, d x d
  Matrix Q_factor;  // lower triangular, d x d
  Matrix H_free;    // d x d^2; the realized H is its symmetrization
  Vector C;
  double epsilon = 1e-8;

  [[nodiscard]] Eigen::Index dimension() const noexcept { return J.rows(); }
  [[nodiscard]] Matrix R() const;
  [[nodiscard]] Matrix Q() const;
  [[nodiscard]] Matrix A() const;
  [[nodiscard]] QuadraticOperators realize() const;

  /// Flat parameter vector: strict lower part of J, lower parts of both factors, H_free, C.
  [[nodiscard]] Vector to_vector() const;
  static StableParameterization from_vector(const Vector& theta, Eigen::Index d, double epsilon);
  static Eigen::Index parameter_count(Eigen::Index d);

  /// Exact representation of `ops` when its A is Hurwitz; otherwise of A shifted
  /// left until it is.
  static StableParameterization from_operators(const QuadraticOperators& ops, double epsilon);
};

/// Solves A^T P + P A = -I for Hurwitz A.
Matrix solve_lyapunov(const Matrix& a);

/// One-step RK4 prediction loss over consecutive snapshots of `p`, plus
/// alpha_A ||A||^2 + alpha_H ||H||^2 + alpha_C ||C||^2 on the realized operators.
class RolloutObjective {
 public:
  RolloutObjective(const RegressionProblem& p, const SolverConfig& cfg);

  [[nodiscard]] double value(const Vector& theta) const;
  /// Loss and its exact gradient (reverse-mode through each RK4 step).
  double value_and_gradient(const Vector& theta, Vector& grad) const;
  /// Data-fit part only, without penalties.
  [[nodiscard]] double data_loss(const QuadraticOperators& ops) const;

  [[nodiscard]] Eigen::Index dimension() const noexcept { return states_.rows(); }
  [[nodiscard]] double epsilon() const noexcept { return epsilon_; }

 private:
  Matrix states_;
  std::vector<double> steps_;
  double alpha_A_;
  double alpha_H_;
  double alpha_C_;
  double epsilon_;
};

struct StableFitResult {
  FitResult fit;
  StableParameterization params;
  double loss = 0.0;       // rollout data loss of the returned operators
  double initial_loss = 0.0;
  std::size_t epochs = 0;
  bool diverged = false;   // a non-finite loss stopped the optimizer early
  std::string diagnostic;
};

/// Gradient fit of the stable parameterization. `init` seeds the parameters
/// (default: Tikhonov fit of the same problem).
StableFitResult solve_stable(const RegressionProblem& p, const SolverConfig& cfg,
                             const std::optional<QuadraticOperators>& init = std::nullopt);

}  // namespace opinf
