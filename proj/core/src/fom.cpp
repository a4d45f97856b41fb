#include "opinf/fom.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include <Eigen/SparseLU>

#include "explicit_rk.hpp"
#include "opinf/error.hpp"

namespace opinf {

namespace {

bool finite(double v) { return std::isfinite(v); }

}  // namespace

// ---- Burgers ----

void BurgersConfig::validate() const {
  require(n >= 3, "Burgers grid needs at least 3 nodes");
  require(finite(length) && length > 0.0, "Burgers domain length must be positive");
  require(finite(viscosity) && viscosity > 0.0, "Burgers viscosity must be positive");
  require(finite(left) && finite(right) && finite(amplitude), "Burgers boundary and initial data must be finite");
  require(initial == "sine" || initial == "step", "Burgers initial profile must be 'sine' or 'step'");
}

QuadraticOperators burgers_rhs_operators(const BurgersConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = cfg.n;
  const double h = cfg.spacing();
  const double diff = cfg.viscosity / (h * h);
  const double conv = 1.0 / (4.0 * h);
  auto ops = QuadraticOperators::zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ops.A(i, i) = -2.0 * diff;
    // -(u_{i+1}^2 - u_{i-1}^2) / (4h); boundary neighbors are known data.
    if (i > 0) {
      ops.A(i, i - 1) = diff;
      ops.H(i, (i - 1) * n + (i - 1)) = conv;
    } else {
      ops.C(i) += diff * cfg.left + conv * cfg.left * cfg.left;
    }
    if (i + 1 < n) {
      ops.A(i, i + 1) = diff;
      ops.H(i, (i + 1) * n + (i + 1)) = -conv;
    } else {
      ops.C(i) += diff * cfg.right - conv * cfg.right * cfg.right;
    }
  }
  return ops;
}

Vector burgers_initial_state(const BurgersConfig& cfg) {
  cfg.validate();
  Vector x(cfg.n);
  const double h = cfg.spacing();
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const double z = static_cast<double>(i + 1) * h;
    const double base = cfg.left + (cfg.right - cfg.left) * z / cfg.length;
    const double bump = cfg.initial == "sine" ? std::sin(std::numbers::pi * z / cfg.length)
                                              : (z < 0.5 * cfg.length ? 1.0 : 0.0);
    x(i) = base + cfg.amplitude * bump;
  }
  return x;
}

// ---- reactor surrogate ----

void ReactorSurrogateConfig::validate() const {
  require(n_cells >= 3, "reactor needs at least 3 cells per field");
  for (double v : {length, velocity, diffusion, cooling, t_cool, beta, gamma, t_ref, source_x, source_t}) {
    require(finite(v), "reactor coefficients must be finite");
  }
  require(length > 0.0 && velocity > 0.0, "reactor length and velocity must be positive");
  require(diffusion >= 0.0 && beta >= 0.0, "reactor diffusion and source amplitude must be non-negative");
  require(cooling > 0.0, "reactor cooling coupling must be positive");
}

double reactor_source(const ReactorSurrogateConfig& cfg, double x, double t) {
  return cfg.beta * (1.0 - x) / (1.0 + std::exp(-cfg.gamma * (t - cfg.t_ref)));
}

Vector reactor_rhs(const ReactorSurrogateConfig& cfg, const Vector& state) {
  const Eigen::Index n = cfg.n_cells;
  require(state.size() == 2 * n, "reactor state must have length 2 n_cells");
  if (!state.allFinite()) fail_validation("reactor state is not finite");
  const double h = cfg.spacing();
  const double adv = cfg.velocity / h;
  const double dif = cfg.diffusion / (h * h);
  const auto x = state.head(n);
  const auto t = state.tail(n);
  Vector out(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x_up = i > 0 ? x(i - 1) : 0.0;
    const double t_up = i > 0 ? t(i - 1) : cfg.t_cool;
    const double t_down = i + 1 < n ? t(i + 1) : t(i);  // zero-gradient outlet
    const double s = reactor_source(cfg, x(i), t(i));
    out(i) = -adv * (x(i) - x_up) + cfg.source_x * s;
    out(n + i) = -adv * (t(i) - t_up) + dif * (t_up - 2.0 * t(i) + t_down) +
                 cfg.cooling * (cfg.t_cool - t(i)) + cfg.source_t * s;
  }
  return out;
}

SparseMatrix reactor_jacobian(const ReactorSurrogateConfig& cfg, const Vector& state) {
  const Eigen::Index n = cfg.n_cells;
  require(state.size() == 2 * n, "reactor state must have length 2 n_cells");
  const double h = cfg.spacing();
  const double adv = cfg.velocity / h;
  const double dif = cfg.diffusion / (h * h);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(8 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = state(i);
    const double t = state(n + i);
    const double sig = 1.0 / (1.0 + std::exp(-cfg.gamma * (t - cfg.t_ref)));
    const double ds_dx = -cfg.beta * sig;
    const double ds_dt = cfg.beta * (1.0 - x) * cfg.gamma * sig * (1.0 - sig);
    const Eigen::Index ti = n + i;

    trip.emplace_back(i, i, -adv + cfg.source_x * ds_dx);
    trip.emplace_back(i, ti, cfg.source_x * ds_dt);
    if (i > 0) trip.emplace_back(i, i - 1, adv);

    double diag = -adv - 2.0 * dif - cfg.cooling + cfg.source_t * ds_dt;
    if (i > 0) trip.emplace_back(ti, ti - 1, adv + dif);
    if (i + 1 < n) {
      trip.emplace_back(ti, ti + 1, dif);
    } else {
      diag += dif;
    }
    trip.emplace_back(ti, ti, diag);
    trip.emplace_back(ti, i, cfg.source_t * ds_dx);
  }
  SparseMatrix j(2 * n, 2 * n);
  j.setFromTriplets(trip.begin(), trip.end());
  return j;
}

Vector reactor_initial_state(const ReactorSurrogateConfig& cfg) {
  cfg.validate();
  Vector x(2 * cfg.n_cells);
  x.head(cfg.n_cells).setZero();
  x.tail(cfg.n_cells).setConstant(cfg.t_cool);
  return x;
}

BlockLayout reactor_layout(const ReactorSurrogateConfig& cfg) {
  return BlockLayout::from_sizes({{"X", cfg.n_cells}, {"T", cfg.n_cells}});
}

// ---- ODE systems ----

OdeSystem quadratic_system(const QuadraticOperators& ops) {
  const Eigen::Index d = ops.dimension();
  // Keep only the nonzero quadratic coefficients; FOM operators are very sparse.
  struct Term {
    Eigen::Index row, i, j;
    double value;
  };
  auto terms = std::make_shared<std::vector<Term>>();
  for (Eigen::Index col = 0; col < d * d; ++col) {
    for (Eigen::Index row = 0; row < d; ++row) {
      if (ops.H(row, col) != 0.0) terms->push_back({row, col / d, col % d, ops.H(row, col)});
    }
  }
  auto a = std::make_shared<SparseMatrix>(ops.A.sparseView());
  auto c = std::make_shared<Vector>(ops.C);
  OdeSystem sys;
  sys.rhs = [a, c, terms, d](const Vector& x) {
    require(x.size() == d, "state length does not match the system dimension");
    Vector out = (*a) * x + *c;
    for (const auto& t : *terms) out(t.row) += t.value * x(t.i) * x(t.j);
    return out;
  };
  sys.jacobian = [a, terms, d](const Vector& x) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(a->nonZeros()) + 2 * terms->size());
    for (Eigen::Index k = 0; k < a->outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(*a, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    }
    for (const auto& t : *terms) {
      trip.emplace_back(t.row, t.i, t.value * x(t.j));
      trip.emplace_back(t.row, t.j, t.value * x(t.i));
    }
    SparseMatrix j(d, d);
    j.setFromTriplets(trip.begin(), trip.end());
    return j;
  };
  return sys;
}

OdeSystem reactor_system(const ReactorSurrogateConfig& cfg) {
  cfg.validate();
  return {[cfg](const Vector& x) { return reactor_rhs(cfg, x); },
          [cfg](const Vector& x) { return reactor_jacobian(cfg, x); }};
}

// ---- TR-BDF2 ----

namespace {

namespace trbdf {
const double gamma = 2.0 - std::numbers::sqrt2;
const double d = gamma / 2.0;
const double w = std::numbers::sqrt2 / 4.0;
const double bh1 = (1.0 - w) / 3.0;
const double bh2 = (3.0 * w + 1.0) / 3.0;
const double bh3 = d / 3.0;
}  // namespace trbdf

double rms_scaled(const Vector& v, const Vector& sc) {
  return std::sqrt((v.array() / sc.array()).square().mean());
}

}  // namespace

Trajectory integrate_trbdf2(const OdeSystem& sys, const Vector& x0, const TimeGrid& grid,
                            const ImplicitOptions& opt) {
  require(opt.rtol > 0.0 && opt.atol > 0.0, "integrator tolerances must be positive");
  if (!x0.allFinite()) fail_validation("initial state is not finite");
  const Eigen::Index n = x0.size();
  Trajectory traj{grid, Matrix(n, static_cast<Eigen::Index>(grid.size())), false, std::nullopt, 0};
  traj.values.col(0) = x0;

  double t = grid.front();
  Vector y = x0;
  Vector f0 = sys.rhs(y);
  const double span = grid.back() - grid.front();
  const double h_min = 1e-14 * std::max(1.0, std::abs(grid.back()));
  double h = opt.initial_step;
  if (h <= 0.0) {
    const Vector sc = (opt.atol + opt.rtol * y.array().abs()).matrix();
    const double d0 = rms_scaled(y, sc);
    const double d1 = rms_scaled(f0, sc);
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  }
  h = std::min(h, span);

  SparseMatrix identity(n, n);
  identity.setIdentity();
  Eigen::SparseLU<SparseMatrix> lu;
  std::size_t attempts = 0;
  std::size_t next = 1;

  while (next < grid.size()) {
    if (++attempts > opt.max_steps) {
      fail_numerical("implicit integrator exceeded " + std::to_string(opt.max_steps) +
                     " steps; last accepted time " + std::to_string(t));
    }
    const double target = grid[next];
    double step = h;
    bool hits = false;
    if (t + step >= target - 1e-12 * std::max(1.0, std::abs(target))) {
      step = target - t;
      hits = true;
    }

    const Vector sc = (opt.atol + opt.rtol * y.array().abs()).matrix();
    const SparseMatrix m = identity - (step * trbdf::d) * sys.jacobian(y);
    lu.compute(m);
    bool ok = lu.info() == Eigen::Success;

    // Simplified Newton on z - step d f(z) = base with the frozen iteration matrix.
    auto newton = [&](Vector& z, const Vector& base) {
      double prev = 0.0;
      for (int it = 0; it < 10; ++it) {
        const Vector g = z - step * trbdf::d * sys.rhs(z) - base;
        const Vector dz = lu.solve(-g);
        z += dz;
        const double nrm = rms_scaled(dz, sc);
        if (!std::isfinite(nrm)) return false;
        if (nrm <= 1e-2) return true;
        if (it > 0 && nrm > 0.9 * prev) return false;
        prev = nrm;
      }
      return false;
    };

    Vector z2, z3, f2, f3;
    if (ok) {
      z2 = y + step * trbdf::gamma * f0;
      ok = newton(z2, y + step * trbdf::d * f0);
    }
    if (ok) {
      f2 = sys.rhs(z2);
      z3 = y + step * (trbdf::w * f0 + trbdf::w * f2 + trbdf::d * f2);
      ok = newton(z3, y + step * (trbdf::w * f0 + trbdf::w * f2));
    }
    if (!ok) {
      h = 0.25 * step;
      if (h < h_min) {
        fail_numerical("implicit integrator step size underflow after Newton failure; last accepted time " +
                       std::to_string(t));
      }
      continue;
    }
    f3 = sys.rhs(z3);
    const Vector raw = step * ((trbdf::w - trbdf::bh1) * f0 + (trbdf::w - trbdf::bh2) * f2 +
                               (trbdf::d - trbdf::bh3) * f3);
    const Vector err = lu.solve(raw);
    const Vector sc_err = (opt.atol + opt.rtol * y.array().abs().max(z3.array().abs())).matrix();
    const double en = rms_scaled(err, sc_err);
    const double factor =
        std::isfinite(en) ? std::clamp(0.9 * std::pow(std::max(en, 1e-12), -1.0 / 3.0), 0.2, 5.0) : 0.2;

    if (std::isfinite(en) && en <= 1.0) {
      t = hits ? target : t + step;
      y = z3;
      f0 = f3;
      ++traj.steps;
      if (hits) traj.values.col(static_cast<Eigen::Index>(next++)) = y;
      // A step clipped to an output instant says little about the natural step size.
      h = hits ? std::max(h * std::min(factor, 1.0), step * factor) : step * factor;
    } else {
      h = step * std::min(factor, 0.5);
    }
    if (h < h_min) {
      fail_numerical("implicit integrator step size underflow; last accepted time " + std::to_string(t));
    }
  }
  return traj;
}

// ---- dataset generation ----

FomIntegrator parse_fom_integrator(const std::string& name) {
  if (name == "implicit-trbdf") return FomIntegrator::kImplicitTrbdf;
  if (name == "rk45-adaptive") return FomIntegrator::kRk45Adaptive;
  fail_validation("unknown FOM integrator '" + name + "'");
}

std::string to_string(FomIntegrator integrator) {
  return integrator == FomIntegrator::kImplicitTrbdf ? "implicit-trbdf" : "rk45-adaptive";
}

FomKind parse_fom_kind(const std::string& name) {
  if (name == "burgers") return FomKind::kBurgers;
  if (name == "reactor") return FomKind::kReactor;
  fail_validation("unknown full-order model '" + name + "'");
}

std::string to_string(FomKind kind) { return kind == FomKind::kBurgers ? "burgers" : "reactor"; }

void GenerateSpec::validate() const {
  if (model == FomKind::kBurgers) {
    burgers.validate();
  } else {
    reactor.validate();
  }
  require(samples >= 2, "generation needs at least 2 output instants");
  require(finite(t0) && finite(t1) && t1 > t0, "generation horizon must satisfy t0 < t1");
  require(rtol > 0.0 && atol > 0.0, "integrator tolerances must be positive");
}

OdeSystem fom_system(const GenerateSpec& spec) {
  spec.validate();
  if (spec.model == FomKind::kBurgers) return quadratic_system(burgers_rhs_operators(spec.burgers));
  return reactor_system(spec.reactor);
}

Vector fom_initial_state(const GenerateSpec& spec) {
  return spec.model == FomKind::kBurgers ? burgers_initial_state(spec.burgers)
                                         : reactor_initial_state(spec.reactor);
}

BlockLayout fom_layout(const GenerateSpec& spec) {
  return spec.model == FomKind::kBurgers ? BlockLayout::single("u", spec.burgers.n)
                                         : reactor_layout(spec.reactor);
}

FomRun generate_dataset(const GenerateSpec& spec, const TimeGrid& grid) {
  const OdeSystem sys = fom_system(spec);
  const Vector x0 = fom_initial_state(spec);

  const auto started = std::chrono::steady_clock::now();
  Trajectory traj = [&] {
    if (spec.integrator == FomIntegrator::kImplicitTrbdf) {
      return integrate_trbdf2(sys, x0, grid, {spec.rtol, spec.atol});
    }
    IntegrateOptions opt;
    opt.rtol = spec.rtol;
    opt.atol = spec.atol;
    Trajectory out = detail::dopri5(sys.rhs, x0, grid, opt);
    if (out.diverged) {
      fail_numerical("explicit FOM integration failed; last accepted time " +
                     std::to_string(out.diverged_at.value_or(grid.front())));
    }
    return out;
  }();
  Matrix derivs(traj.values.rows(), traj.values.cols());
  for (Eigen::Index k = 0; k < traj.values.cols(); ++k) derivs.col(k) = sys.rhs(traj.values.col(k));
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  return {SnapshotDataset(std::move(traj.values), grid, fom_layout(spec), std::move(derivs)), seconds,
          traj.steps};
}

}  // namespace opinf
