#include "opinf/rom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "explicit_rk.hpp"
#include "json_io.hpp"
#include "opinf/error.hpp"
#include "opinf/opinf.hpp"

namespace opinf {

Vector rhs(const QuadraticOperators& ops, const Eigen::Ref<const Vector>& x) {
  const Eigen::Index d = ops.dimension();
  require(x.size() == d, "state has length " + std::to_string(x.size()) +
                             ", operators have dimension " + std::to_string(d));
  Vector out = ops.A * x + ops.C;
  // H (x ⊗ x) = sum_i x_i H_i x with H_i the i-th d x d column block.
  for (Eigen::Index i = 0; i < d; ++i) {
    if (x(i) != 0.0) out.noalias() += x(i) * (ops.H.middleCols(i * d, d) * x);
  }
  return out;
}

Vector rhs_kronecker(const QuadraticOperators& ops, const Eigen::Ref<const Vector>& x) {
  require(x.size() == ops.dimension(), "state length does not match operator dimension");
  return ops.A * x + ops.H * kron_square(x) + ops.C;
}

IntegrationMethod parse_integration_method(const std::string& name) {
  if (name == "rk4-fixed") return IntegrationMethod::kRk4Fixed;
  if (name == "rk45-adaptive") return IntegrationMethod::kRk45Adaptive;
  fail_validation("unknown integration method '" + name + "'");
}

std::string to_string(IntegrationMethod method) {
  return method == IntegrationMethod::kRk4Fixed ? "rk4-fixed" : "rk45-adaptive";
}

namespace detail {

namespace {

bool out_of_bounds(const Vector& x, double bound) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(std::abs(x(i)) <= bound)) return true;
  }
  return false;
}

Trajectory start(const TimeGrid& grid, const Vector& x0) {
  Trajectory traj{grid, Matrix(x0.size(), static_cast<Eigen::Index>(grid.size())), false, std::nullopt, 0};
  traj.values.col(0) = x0;
  return traj;
}

void mark_diverged(Trajectory& traj, std::size_t from_col, double t) {
  traj.diverged = true;
  traj.diverged_at = t;
  const auto first = static_cast<Eigen::Index>(from_col);
  traj.values.rightCols(traj.values.cols() - first).setConstant(std::numeric_limits<double>::quiet_NaN());
}

}  // namespace

Trajectory rk4_fixed(const RhsFn& f, const Vector& x0, const TimeGrid& grid,
                     const IntegrateOptions& opt) {
  const double cap = opt.max_step.value_or(grid.min_spacing());
  require(cap > 0.0, "maximum RK4 step must be positive");
  Trajectory traj = start(grid, x0);
  Vector x = x0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double span = grid[i + 1] - grid[i];
    const auto substeps = static_cast<std::size_t>(std::ceil(span / cap * (1.0 - 1e-12)));
    const double h = span / static_cast<double>(std::max<std::size_t>(substeps, 1));
    for (std::size_t s = 0; s < std::max<std::size_t>(substeps, 1); ++s) {
      const Vector k1 = f(x);
      const Vector k2 = f(x + 0.5 * h * k1);
      const Vector k3 = f(x + 0.5 * h * k2);
      const Vector k4 = f(x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      ++traj.steps;
      if (out_of_bounds(x, opt.divergence_bound)) {
        mark_diverged(traj, i + 1, grid[i] + h * static_cast<double>(s + 1));
        return traj;
      }
    }
    traj.values.col(static_cast<Eigen::Index>(i + 1)) = x;
  }
  return traj;
}

namespace {

// Dormand-Prince 5(4) with the 4th-order continuous extension for output instants.
namespace dp {
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
}  // namespace dp

double error_norm(const Vector& err, const Vector& y0, const Vector& y1, double rtol, double atol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    acc += (err(i) / sc) * (err(i) / sc);
  }
  return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(err.size(), 1)));
}

}  // namespace

Trajectory dopri5(const RhsFn& f, const Vector& x0, const TimeGrid& grid,
                  const IntegrateOptions& opt) {
  Trajectory traj = start(grid, x0);
  const double t_end = grid.back();
  double t = grid.front();
  Vector y = x0;
  Vector k1 = f(y);

  // Initial step from the local scale of the solution and its derivative.
  double h = 0.0;
  {
    const Vector zero = Vector::Zero(y.size());
    const double d0 = error_norm(y, y, zero, opt.rtol, opt.atol);
    const double d1n = error_norm(k1, y, zero, opt.rtol, opt.atol);
    h = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h = std::min({h, t_end - t, grid.min_spacing()});
  }

  std::size_t next_out = 1;
  const double h_min = 1e-14 * std::max(1.0, std::abs(t_end));
  while (next_out < grid.size()) {
    if (traj.steps >= opt.max_steps) {
      mark_diverged(traj, next_out, t);
      return traj;
    }
    h = std::min(h, t_end - t);
    const Vector k2 = f(y + h * (dp::a21 * k1));
    const Vector k3 = f(y + h * (dp::a31 * k1 + dp::a32 * k2));
    const Vector k4 = f(y + h * (dp::a41 * k1 + dp::a42 * k2 + dp::a43 * k3));
    const Vector k5 = f(y + h * (dp::a51 * k1 + dp::a52 * k2 + dp::a53 * k3 + dp::a54 * k4));
    const Vector k6 = f(y + h * (dp::a61 * k1 + dp::a62 * k2 + dp::a63 * k3 + dp::a64 * k4 +
                                        dp::a65 * k5));
    const Vector y1 = y + h * (dp::b1 * k1 + dp::b3 * k3 + dp::b4 * k4 + dp::b5 * k5 + dp::b6 * k6);
    const Vector k7 = f(y1);
    const Vector err =
        h * (dp::e1 * k1 + dp::e3 * k3 + dp::e4 * k4 + dp::e5 * k5 + dp::e6 * k6 + dp::e7 * k7);
    const double en = error_norm(err, y, y1, opt.rtol, opt.atol);
    ++traj.steps;

    if (!std::isfinite(en)) {
      h *= 0.2;
      if (h < h_min) {
        mark_diverged(traj, next_out, t);
        return traj;
      }
      continue;
    }
    if (en <= 1.0) {
      const double t1 = (t_end - t - h <= 1e-14 * std::max(1.0, std::abs(t_end))) ? t_end : t + h;
      // Dense output for every grid instant inside (t, t1].
      const Vector r1 = y;
      const Vector r2 = y1 - y;
      const Vector r3 = h * k1 - r2;
      const Vector r4 = r2 - h * k7 - r3;
      const Vector r5 = h * (dp::d1 * k1 + dp::d3 * k3 + dp::d4 * k4 + dp::d5 * k5 + dp::d6 * k6 +
                             dp::d7 * k7);
      while (next_out < grid.size() && grid[next_out] <= t1) {
        const auto col = static_cast<Eigen::Index>(next_out);
        if (grid[next_out] == t1) {
          traj.values.col(col) = y1;
        } else {
          const double th = (grid[next_out] - t) / h;
          const double th1 = 1.0 - th;
          traj.values.col(col) = r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
        }
        ++next_out;
      }
      t = t1;
      y = y1;
      k1 = k7;
      if (out_of_bounds(y, opt.divergence_bound)) {
        mark_diverged(traj, next_out, t);
        return traj;
      }
    }
    const double factor = std::clamp(0.9 * std::pow(std::max(en, 1e-10), -0.2), 0.2, 10.0);
    h = en <= 1.0 ? h * factor : h * std::min(1.0, factor);
    if (h < h_min && next_out < grid.size()) {
      mark_diverged(traj, next_out, t);
      return traj;
    }
  }
  return traj;
}

}  // namespace detail

Trajectory integrate(const QuadraticOperators& ops, const Vector& x0, const TimeGrid& grid,
                     const IntegrateOptions& options) {
  require(x0.size() == ops.dimension(), "initial state has length " + std::to_string(x0.size()) +
                                            ", operators have dimension " +
                                            std::to_string(ops.dimension()));
  if (!x0.allFinite()) fail_validation("initial state is not finite");
  const detail::RhsFn f = [&ops](const Vector& x) { return rhs(ops, x); };
  if (options.method == IntegrationMethod::kRk4Fixed) return detail::rk4_fixed(f, x0, grid, options);
  return detail::dopri5(f, x0, grid, options);
}

// ---- ROM ----

void RomModel::validate() const {
  require(ops.dimension() == basis.rank(),
          "model operators have dimension " + std::to_string(ops.dimension()) + ", basis has " +
              std::to_string(basis.rank()) + " columns");
  std::size_t n_scaled = scaling.blocks().size();
  require(n_scaled == basis.state_layout().size(),
          "scaling blocks do not match the basis state layout");
}

RomSimulation simulate_rom(const RomModel& model, const Vector& x0_full, const TimeGrid& grid,
                           const IntegrateOptions& options) {
  model.validate();
  const BlockLayout& layout = model.basis.state_layout();
  require(x0_full.size() == layout.total_rows(),
          "initial state has length " + std::to_string(x0_full.size()) + ", model expects " +
              std::to_string(layout.total_rows()));
  const Vector scaled = model.scaling.apply_states(x0_full, layout);
  const Vector x0 = model.basis.V().transpose() * scaled;
  Trajectory reduced = integrate(model.ops, x0, grid, options);
  RomSimulation sim{reduced, reduced};
  sim.full.values = model.scaling.unapply_states(model.basis.V() * sim.reduced.values, layout);
  return sim;
}

TrajectoryError trajectory_error(const Trajectory& truth, const Trajectory& approx,
                                 const std::optional<BlockLayout>& layout) {
  if (!(truth.grid == approx.grid)) fail_validation("trajectory grids differ");
  require(truth.values.rows() == approx.values.rows() && truth.values.cols() == approx.values.cols(),
          "trajectory shapes differ");
  auto rel = [](const auto& t, const auto& a) {
    const double num = (t - a).norm();
    const double den = t.norm();
    return den > 0.0 ? num / den : num;
  };
  TrajectoryError out;
  out.overall = rel(truth.values, approx.values);
  if (layout) {
    layout->validate(truth.values.rows());
    for (const auto& b : layout->blocks()) {
      out.per_block[b.name] =
          rel(truth.values.middleRows(b.offset, b.rows), approx.values.middleRows(b.offset, b.rows));
    }
  }
  out.per_time = (truth.values - approx.values).colwise().norm().transpose();
  return out;
}

// ---- files ----

void save_model(const std::filesystem::path& dir, const RomModel& model) {
  model.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail_io("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(model.metadata_json);
  } catch (const nlohmann::json::exception&) {
    fail_validation("model metadata is not valid JSON");
  }
  OperatorFileInfo info;
  info.backend = meta.value("backend", std::string("unknown"));
  info.config_json = meta.contains("solver") ? meta["solver"].dump() : "{}";
  info.residual = meta.value("residual", 0.0);
  save_operators(dir / "operators", model.ops, info);
  save_basis(dir / "basis", model.basis, model.scaling);
  detail::write_json(dir / "model.json", meta);
}

RomModel load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail_io("model directory " + dir.string() + " not found");
  auto ops = load_operators(dir / "operators");
  auto [basis, scaling] = load_basis(dir / "basis");
  const auto meta = detail::read_json(dir / "model.json");
  RomModel model{std::move(ops), std::move(basis), std::move(scaling), meta.dump()};
  model.validate();
  return model;
}

}  // namespace opinf
