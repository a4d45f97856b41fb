#include "opinf/operators.hpp"

#include <algorithm>

#include "opinf/error.hpp"

namespace opinf {

Vector kron_square(const Eigen::Ref<const Vector>& x) {
  const Eigen::Index d = x.size();
  Vector out(d * d);
  for (Eigen::Index i = 0; i < d; ++i) out.segment(i * d, d) = x(i) * x;
  return out;
}

Matrix kron_square_columns(const Matrix& x) {
  const Eigen::Index d = x.rows();
  Matrix out(d * d, x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    for (Eigen::Index i = 0; i < d; ++i) out.col(k).segment(i * d, d) = x(i, k) * x.col(k);
  }
  return out;
}

Matrix symmetrize_quadratic(const Matrix& h) {
  const Eigen::Index d = h.rows();
  require(h.cols() == d * d, "quadratic operator must be d x d^2");
  Matrix out = h;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const Vector avg = 0.5 * (h.col(i * d + j) + h.col(j * d + i));
      out.col(i * d + j) = avg;
      out.col(j * d + i) = avg;
    }
  }
  return out;
}

QuadraticOperators::QuadraticOperators(Matrix a, Matrix h, Vector c)
    : A(std::move(a)), H(std::move(h)), C(std::move(c)) {
  const Eigen::Index d = A.rows();
  require(A.cols() == d, "A must be square");
  require(H.rows() == d && H.cols() == d * d, "H must be d x d^2");
  require(C.size() == d, "C must have length d");
}

QuadraticOperators QuadraticOperators::zero(Eigen::Index d) {
  return {Matrix::Zero(d, d), Matrix::Zero(d, d * d), Vector::Zero(d)};
}

Matrix QuadraticOperators::stacked() const {
  const Eigen::Index d = dimension();
  Matrix o(d, d + d * d + 1);
  o << A, H, C;
  return o;
}

QuadraticOperators QuadraticOperators::from_stacked(const Matrix& o) {
  const Eigen::Index d = o.rows();
  require(o.cols() == d + d * d + 1, "stacked operator must be d x (d + d^2 + 1)");
  return {o.leftCols(d), o.middleCols(d, d * d), o.col(d + d * d)};
}

bool QuadraticOperators::all_finite() const {
  return A.allFinite() && H.allFinite() && C.allFinite();
}

double QuadraticOperators::asymmetry() const {
  const Eigen::Index d = dimension();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i + 1; j < d; ++j) {
      worst = std::max(worst, (H.col(i * d + j) - H.col(j * d + i)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double QuadraticOperators::max_real_eigenvalue() const {
  if (dimension() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(A, false);
  return es.eigenvalues().real().maxCoeff();
}

QuadraticOperators affine_change(const QuadraticOperators& ops, const Vector& shift,
                                 const Vector& scale) {
  const Eigen::Index d = ops.dimension();
  require(shift.size() == d && scale.size() == d, "affine change needs shift and scale of length d");
  require((scale.array() > 0.0).all(), "affine change needs positive scales");
  const Vector inv = scale.cwiseInverse();

  Matrix a = ops.A * scale.asDiagonal();
  Matrix h(d, d * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto block = ops.H.middleCols(i * d, d);
    // H (c ⊗ S y) contributes c_i H_i S, H (S y ⊗ c) contributes column s_i H_i c.
    a.noalias() += shift(i) * block * scale.asDiagonal();
    a.col(i).noalias() += scale(i) * (block * shift);
    h.middleCols(i * d, d) = scale(i) * block * scale.asDiagonal();
  }
  Vector c = ops.A * shift + ops.H * kron_square(shift) + ops.C;
  return {inv.asDiagonal() * a, symmetrize_quadratic(inv.asDiagonal() * h), inv.asDiagonal() * c};
}

}  // namespace opinf
