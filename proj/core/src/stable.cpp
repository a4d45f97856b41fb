#include "opinf/stable.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "opinf/error.hpp"

namespace opinf {

namespace {

Matrix lower_factor(const Matrix& spd_minus_floor) {
  // Clip the spectrum before factoring so near-singular targets still yield a factor.
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (spd_minus_floor + spd_minus_floor.transpose()));
  Vector lambda = es.eigenvalues();
  const double top = std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = std::max(lambda(i), 1e-14 * top);
  const Matrix clipped = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
  Eigen::LLT<Matrix> llt(0.5 * (clipped + clipped.transpose()));
  if (llt.info() != Eigen::Success) return Matrix::Zero(clipped.rows(), clipped.cols());
  return llt.matrixL();
}

}  // namespace

Matrix StableParameterization::R() const {
  return R_factor * R_factor.transpose() + epsilon * Matrix::Identity(dimension(), dimension());
}

Matrix StableParameterization::Q() const {
  return Q_factor * Q_factor.transpose() + epsilon * Matrix::Identity(dimension(), dimension());
}

Matrix StableParameterization::A() const { return (J - R()) * Q(); }

QuadraticOperators StableParameterization::realize() const {
  return {A(), symmetrize_quadratic(H_free), C};
}

Eigen::Index StableParameterization::parameter_count(Eigen::Index d) {
  return d * (d - 1) / 2 + d * (d + 1) + d * d * d + d;
}

Vector StableParameterization::to_vector() const {
  const Eigen::Index d = dimension();
  Vector theta(parameter_count(d));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) theta(k++) = J(i, j);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) theta(k++) = R_factor(i, j);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) theta(k++) = Q_factor(i, j);
  }
  theta.segment(k, d * d * d) = Eigen::Map<const Vector>(H_free.data(), d * d * d);
  k += d * d * d;
  theta.segment(k, d) = C;
  return theta;
}

StableParameterization StableParameterization::from_vector(const Vector& theta, Eigen::Index d,
                                                           double epsilon) {
  require(theta.size() == parameter_count(d), "parameter vector has the wrong length");
  StableParameterization p;
  p.epsilon = epsilon;
  p.J = Matrix::Zero(d, d);
  p.R_factor = Matrix::Zero(d, d);
  p.Q_factor = Matrix::Zero(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      p.J(i, j) = theta(k);
      p.J(j, i) = -theta(k);
      ++k;
    }
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) p.R_factor(i, j) = theta(k++);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) p.Q_factor(i, j) = theta(k++);
  }
  p.H_free = Eigen::Map<const Matrix>(theta.data() + k, d, d * d);
  k += d * d * d;
  p.C = theta.segment(k, d);
  return p;
}

Matrix solve_lyapunov(const Matrix& a) {
  const Eigen::Index d = a.rows();
  require(a.cols() == d, "Lyapunov solve needs a square matrix");
  // vec(A^T P + P A) = (I ⊗ A^T + A^T ⊗ I) vec(P)
  const Matrix at = a.transpose();
  const Matrix eye = Matrix::Identity(d, d);
  Matrix big = Matrix::Zero(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      big.block(i * d, j * d, d, d) += eye(i, j) * at;
      big.block(i * d, j * d, d, d) += at(i, j) * eye;
    }
  }
  Vector rhs = -Eigen::Map<const Vector>(eye.data(), d * d);
  Vector vec = big.partialPivLu().solve(rhs);
  Matrix p = Eigen::Map<Matrix>(vec.data(), d, d);
  return 0.5 * (p + p.transpose());
}

StableParameterization StableParameterization::from_operators(const QuadraticOperators& ops,
                                                              double epsilon) {
  const Eigen::Index d = ops.dimension();
  const Matrix eye = Matrix::Identity(d, d);
  Matrix a = ops.A;
  const double lead = ops.max_real_eigenvalue();
  const double margin = 1e-3 * std::max(1.0, a.norm() / static_cast<double>(std::max<Eigen::Index>(d, 1)));
  if (!(lead < -margin)) a -= (lead + margin) * eye;

  const Matrix p = solve_lyapunov(a);
  const Matrix m = a * p.inverse();
  // A P^-1 = J - R with R = -sym(A P^-1) = P^-2 / 2 > 0.
  StableParameterization out;
  out.epsilon = epsilon;
  out.J = 0.5 * (m - m.transpose());
  out.R_factor = lower_factor(-0.5 * (m + m.transpose()) - epsilon * eye);
  out.Q_factor = lower_factor(p - epsilon * eye);
  out.H_free = ops.H;
  out.C = ops.C;
  return out;
}

// ---- objective ----

RolloutObjective::RolloutObjective(const RegressionProblem& p, const SolverConfig& cfg)
    : states_(p.states()),
      alpha_A_(cfg.alpha_A),
      alpha_H_(cfg.alpha_H),
      alpha_C_(cfg.alpha_C),
      epsilon_(cfg.gradient.epsilon) {
  require(states_.cols() >= 2, "rollout loss needs at least two snapshots");
  const auto& t = p.grid.instants();
  require(t.size() == static_cast<std::size_t>(states_.cols()), "grid does not match the data");
  steps_.resize(t.size() - 1);
  for (std::size_t i = 0; i + 1 < t.size(); ++i) steps_[i] = t[i + 1] - t[i];
}

namespace {

Vector eval_rhs(const QuadraticOperators& ops, const Vector& x) {
  return ops.A * x + ops.H * kron_square(x) + ops.C;
}

// Jf(z)^T g for f(z) = A z + H (z ⊗ z) + C.
Vector rhs_jacobian_transpose(const QuadraticOperators& ops, const Vector& z, const Vector& g) {
  const Eigen::Index d = z.size();
  Vector w = ops.H.transpose() * g;
  Eigen::Map<const Matrix> wt(w.data(), d, d);  // W^T with W(p, q) = w(p*d + q)
  return ops.A.transpose() * g + (wt + wt.transpose()) * z;
}

Vector rk4_step(const QuadraticOperators& ops, const Vector& x, double h) {
  const Vector k1 = eval_rhs(ops, x);
  const Vector k2 = eval_rhs(ops, x + 0.5 * h * k1);
  const Vector k3 = eval_rhs(ops, x + 0.5 * h * k2);
  const Vector k4 = eval_rhs(ops, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

double RolloutObjective::data_loss(const QuadraticOperators& ops) const {
  double loss = 0.0;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    loss += (states_.col(col + 1) - rk4_step(ops, states_.col(col), steps_[i])).squaredNorm();
  }
  return loss;
}

double RolloutObjective::value(const Vector& theta) const {
  const auto params = StableParameterization::from_vector(theta, dimension(), epsilon_);
  const auto ops = params.realize();
  return data_loss(ops) + alpha_A_ * ops.A.squaredNorm() + alpha_H_ * ops.H.squaredNorm() +
         alpha_C_ * ops.C.squaredNorm();
}

double RolloutObjective::value_and_gradient(const Vector& theta, Vector& grad) const {
  const Eigen::Index d = dimension();
  const auto params = StableParameterization::from_vector(theta, d, epsilon_);
  const auto ops = params.realize();

  Matrix gA = Matrix::Zero(d, d);
  Matrix gH = Matrix::Zero(d, d * d);
  Vector gC = Vector::Zero(d);
  auto accumulate = [&](const Vector& z, const Vector& g) {
    gA.noalias() += g * z.transpose();
    gH.noalias() += g * kron_square(z).transpose();
    gC += g;
  };

  double loss = 0.0;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const double h = steps_[i];
    const Vector x = states_.col(col);
    const Vector z1 = x;
    const Vector k1 = eval_rhs(ops, z1);
    const Vector z2 = x + 0.5 * h * k1;
    const Vector k2 = eval_rhs(ops, z2);
    const Vector z3 = x + 0.5 * h * k2;
    const Vector k3 = eval_rhs(ops, z3);
    const Vector z4 = x + h * k3;
    const Vector k4 = eval_rhs(ops, z4);
    const Vector e = states_.col(col + 1) - (x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    loss += e.squaredNorm();

    const Vector gy = -2.0 * e;
    Vector g4 = (h / 6.0) * gy;
    Vector g3 = (h / 3.0) * gy;
    Vector g2 = (h / 3.0) * gy;
    Vector g1 = (h / 6.0) * gy;
    accumulate(z4, g4);
    g3 += h * rhs_jacobian_transpose(ops, z4, g4);
    accumulate(z3, g3);
    g2 += 0.5 * h * rhs_jacobian_transpose(ops, z3, g3);
    accumulate(z2, g2);
    g1 += 0.5 * h * rhs_jacobian_transpose(ops, z2, g2);
    accumulate(z1, g1);
  }

  loss += alpha_A_ * ops.A.squaredNorm() + alpha_H_ * ops.H.squaredNorm() +
          alpha_C_ * ops.C.squaredNorm();
  gA += 2.0 * alpha_A_ * ops.A;
  gH += 2.0 * alpha_H_ * ops.H;
  gC += 2.0 * alpha_C_ * ops.C;

  // H = sym(H_free); sym is a self-adjoint projection.
  const Matrix gH_free = symmetrize_quadratic(gH);
  // A = (J - R) Q
  const Matrix q = params.Q();
  const Matrix jr = params.J - params.R();
  const Matrix gJ = gA * q.transpose();
  const Matrix gR = -gJ;
  const Matrix gQ = jr.transpose() * gA;
  // R = L L^T + eps I  =>  dL = (G + G^T) L
  const Matrix gLR = (gR + gR.transpose()) * params.R_factor;
  const Matrix gLQ = (gQ + gQ.transpose()) * params.Q_factor;

  grad.resize(theta.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) grad(k++) = gJ(i, j) - gJ(j, i);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) grad(k++) = gLR(i, j);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) grad(k++) = gLQ(i, j);
  }
  grad.segment(k, d * d * d) = Eigen::Map<const Vector>(gH_free.data(), d * d * d);
  k += d * d * d;
  grad.segment(k, d) = gC;
  return loss;
}

// ---- optimizer ----

namespace {

// Triangular cyclic schedule whose amplitude halves every cycle.
double cyclic_rate(std::size_t epoch, const GradientOptions& opt) {
  const double half = static_cast<double>(opt.half_cycle);
  const double cycle = std::floor(static_cast<double>(epoch) / (2.0 * half));
  const double x = std::abs(static_cast<double>(epoch) / half - 2.0 * cycle - 1.0);
  return opt.lr_min + (opt.lr_max - opt.lr_min) * std::max(0.0, 1.0 - x) / std::pow(2.0, cycle);
}

}  // namespace

StableFitResult solve_stable(const RegressionProblem& p, const SolverConfig& cfg,
                             const std::optional<QuadraticOperators>& init) {
  cfg.validate();
  const Eigen::Index d = p.dimension();
  require(p.D.rows() == d + d * d + 1 && p.D.cols() == p.target.cols(),
          "malformed regression problem");
  const GradientOptions& opt = cfg.gradient;

  QuadraticOperators start = init ? *init : solve_tikhonov(p, cfg).ops;
  require(start.dimension() == d, "initial operators have the wrong dimension");
  if (!start.all_finite()) start = QuadraticOperators::zero(d);
  auto params = StableParameterization::from_operators(start, opt.epsilon);

  Vector theta = params.to_vector();
  if (opt.init_jitter > 0.0) {
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, opt.init_jitter);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) += normal(rng);
  }

  const RolloutObjective objective(p, cfg);
  StableFitResult out;
  Vector grad;
  Vector best_theta = theta;
  double best = std::numeric_limits<double>::infinity();
  Vector m1 = Vector::Zero(theta.size());
  Vector m2 = Vector::Zero(theta.size());
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  std::size_t since_improvement = 0;

  std::size_t epoch = 0;
  for (; epoch < opt.max_epochs; ++epoch) {
    const double loss = objective.value_and_gradient(theta, grad);
    if (epoch == 0) out.initial_loss = loss;
    if (!std::isfinite(loss) || !grad.allFinite()) {
      out.diverged = true;
      out.diagnostic = "non-finite loss at epoch " + std::to_string(epoch) +
                       " (learning rate " + std::to_string(cyclic_rate(epoch, opt)) +
                       "); returning the best finite iterate";
      break;
    }
    if (loss < best * (1.0 - 1e-6)) {
      best = loss;
      best_theta = theta;
      since_improvement = 0;
    } else if (++since_improvement >= opt.patience) {
      break;
    }
    if (loss == 0.0) break;

    const double lr = cyclic_rate(epoch, opt);
    const double t = static_cast<double>(epoch + 1);
    m1 = kBeta1 * m1 + (1.0 - kBeta1) * grad;
    m2 = kBeta2 * m2 + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    theta.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + 1e-8);
  }

  out.epochs = epoch;
  out.params = StableParameterization::from_vector(best_theta, d, opt.epsilon);
  out.fit.ops = out.params.realize();
  out.fit.backend_used = Backend::kStableGradient;
  out.fit.residual = residual(p, out.fit.ops);
  out.fit.note = out.diagnostic;
  out.loss = objective.data_loss(out.fit.ops);
  return out;
}

}  // namespace opinf
