#pragma once

#include "opinf/types.hpp"

namespace opinf {

/// x ⊗ x, ordered so that entry i*d + j holds x_i x_j.
Vector kron_square(const Eigen::Ref<const Vector>& x);

/// Columnwise Kronecker squares of a d x m matrix: d^2 x m.
Matrix kron_square_columns(const Matrix& x);

/// Averages columns (i,j) and (j,i) of a d x d^2 quadratic operator.
Matrix symmetrize_quadratic(const Matrix& h);

/// Linear, quadratic and constant terms of dx/dt = A x + H (x ⊗ x) + C.
struct QuadraticOperators {
  Matrix A;
  Matrix H;
  Vector C;

  QuadraticOperators() = default;
  QuadraticOperators(Matrix a, Matrix h, Vector c);

  static QuadraticOperators zero(Eigen::Index d);

  [[nodiscard]] Eigen::Index dimension() const noexcept { return A.rows(); }

  /// Horizontal concatenation [A H C], d x (d + d^2 + 1).
  [[nodiscard]] Matrix stacked() const;
  static QuadraticOperators from_stacked(const Matrix& o);

  [[nodiscard]] bool all_finite() const;
  /// max_ij |H(:, i*d+j) - H(:, j*d+i)|
  [[nodiscard]] double asymmetry() const;
  [[nodiscard]] double max_real_eigenvalue() const;
};

/// The same dynamics in coordinates y with x = diag(scale) y + shift.
QuadraticOperators affine_change(const QuadraticOperators& ops, const Vector& shift,
                                 const Vector& scale);

}  // namespace opinf
