// End-to-end acceptance checks A1-A9. One PASS/FAIL line per criterion; the exit
// status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <json.hpp>

#include "opinf/pipeline.hpp"
#include "../unit/support.hpp"

using namespace opinf;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_re_eig(const Matrix& a) { return Eigen::EigenSolver<Matrix>(a).eigenvalues().real().maxCoeff(); }

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Quadratic system whose linear part has spectral abscissa -margin.
QuadraticOperators hurwitz_system(Eigen::Index d, std::uint64_t seed, double a_scale, double h_scale, double c_scale,
                                  double margin) {
  Matrix a = a_scale * test::random_matrix(d, d, seed);
  a -= (max_re_eig(a) + margin) * Matrix::Identity(d, d);
  return {a, symmetrize_quadratic(h_scale * test::random_matrix(d, d * d, seed + 1)),
          c_scale * test::random_vector(d, seed + 2)};
}

RegressionProblem problem_from(const QuadraticOperators& ops, const Trajectory& traj) {
  Matrix dx(traj.values.rows(), traj.values.cols());
  for (Eigen::Index k = 0; k < dx.cols(); ++k) dx.col(k) = rhs(ops, traj.values.col(k));
  return assemble_problem(
      SnapshotDataset(traj.values, traj.grid, BlockLayout::single("x", ops.dimension()), dx));
}

// ---- A1 ----
Outcome exact_recovery() {
  const auto start = std::chrono::steady_clock::now();
  const auto truth = hurwitz_system(3, 101, 0.5, 0.2, 0.3, 0.5);
  const auto grid = TimeGrid::uniform(0.0, 2.0, 21);
  IntegrateOptions opt;
  opt.rtol = opt.atol = 1e-10;
  Matrix d(13, 0), target(3, 0);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = problem_from(truth, integrate(truth, test::random_vector(3, 200 + s), grid, opt));
    Matrix dd(13, d.cols() + p.D.cols()), tt(3, target.cols() + p.target.cols());
    dd << d, p.D;
    tt << target, p.target;
    d = dd;
    target = tt;
  }
  SolverConfig cfg;
  cfg.backend = Backend::kTsvd;
  const auto fit = solve_tsvd({d, target, grid}, cfg);
  const double e_a = test::rel_err(fit.ops.A, truth.A);
  const double e_h = test::rel_err(fit.ops.H, truth.H);
  const double e_c = test::rel_err(fit.ops.C, truth.C);
  const double secs = elapsed(start);
  const double worst = std::max({e_a, e_h, e_c});
  return {worst <= 1e-6 && secs < 5.0,
          fmt("rel err A %.2e H %.2e C %.2e (tol 1e-6), %.2f s (limit 5 s)", e_a, e_h, e_c, secs)};
}

// ---- A2 ----
Outcome galerkin_proximity() {
  const auto start = std::chrono::steady_clock::now();
  PipelineConfig cfg;
  GenerateSpec gen;
  gen.model = FomKind::kBurgers;
  gen.burgers.n = 100;
  gen.burgers.initial = "sine";
  cfg.dataset.generate = gen;
  cfg.basis.rule = RankRule::energy(0.9999);
  const auto fom = generate_dataset(gen).data;

  const auto opinf_rom = fit_rom(fom, cfg);
  const auto& model = opinf_rom.model;
  // Intrusive operators in the same scaled coordinates the learned model lives in.
  const auto& s = model.scaling.blocks()[0];
  const auto full = burgers_rhs_operators(gen.burgers);
  const auto scaled = affine_change(full, Vector::Constant(gen.burgers.n, s.shift), Vector::Constant(gen.burgers.n, s.scale));
  const RomModel galerkin{galerkin_rom(scaled, model.basis.V()), model.basis, model.scaling};

  const Vector x0 = fom.states().col(0);
  const auto a = simulate_rom(model, x0, fom.grid());
  const auto b = simulate_rom(galerkin, x0, fom.grid());
  const Trajectory truth{fom.grid(), fom.states()};
  const double opinf_vs_galerkin = trajectory_error(b.full, a.full).overall;
  const double opinf_vs_fom = trajectory_error(truth, a.full).overall;
  const double galerkin_vs_fom = trajectory_error(truth, b.full).overall;
  const double secs = elapsed(start);
  const bool ok = !a.full.diverged && !b.full.diverged && opinf_vs_galerkin <= 0.01 && opinf_vs_fom <= 0.03 &&
                  galerkin_vs_fom <= 0.03 && secs < 60.0;
  return {ok, fmt("r=%ld, OpInf vs Galerkin %.3f%% (tol 1%%), OpInf vs FOM %.3f%%, Galerkin vs FOM %.3f%% (tol 3%%), "
                  "%.1f s (limit 60 s)",
                  static_cast<long>(model.basis.rank()), 100 * opinf_vs_galerkin, 100 * opinf_vs_fom,
                  100 * galerkin_vs_fom, secs)};
}

// ---- A3, A8, A9 share one persisted pipeline run ----
PipelineConfig reactor_config(const std::filesystem::path& out) {
  json j{{"dataset", {{"generate", json::object()}}},
         {"basis", {{"theta", 0.999}, {"blockwise", true}}},
         {"solver", {{"backend", "tikhonov"}, {"alpha_H", 1e-4}}},
         {"output", out.string()},
         {"seed", 0}};
  return parse_pipeline_config(j.dump());
}

struct ReactorRun {
  RunReport report;
  double seconds = 0.0;
  Eigen::Index rank = 0;
  Eigen::Index states = 0;
};

ReactorRun run_reactor(const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const auto gen = cmd_generate(cfg);
  const auto fit = cmd_fit(cfg);
  cmd_simulate(cfg);
  ReactorRun out{cmd_evaluate(cfg), 0.0, fit.model.basis.rank(), gen.data.dimension()};
  out.seconds = elapsed(start);
  return out;
}

Outcome reactor_pipeline(const ReactorRun& run) {
  const auto& r = run.report;
  const double t_err = r.errors.per_block.at("T");
  const bool ok = !r.diverged && r.errors.overall <= 0.02 && t_err <= 0.05 && run.seconds < 600.0;
  std::string ranks;
  for (const auto& [name, k] : r.ranks) ranks += name + "=" + std::to_string(k) + " ";
  return {ok, fmt("ranks %soverall %.3f%% (tol 2%%), T %.3f%% (tol 5%%), X %.3f%%, %.1f s (limit 600 s)", ranks.c_str(),
                  100 * r.errors.overall, 100 * t_err, 100 * r.errors.per_block.at("X"), run.seconds)};
}

Outcome speedup(const ReactorRun& run) {
  const auto ratio = run.report.time_ratio();
  if (!ratio) return {false, "no FOM timing available"};
  const bool ok = run.states == 400 && run.rank <= 10 && *ratio <= 0.1;
  return {ok, fmt("n=%ld, r=%ld, ROM %.4f s / FOM %.4f s = %.4f (tol 0.1)", static_cast<long>(run.states),
                  static_cast<long>(run.rank), run.report.rom_seconds, *run.report.fom_seconds, *ratio)};
}

json without_timings(json j) {
  if (j.is_object()) {
    for (const char* key : {"seconds", "timings"}) j.erase(key);
    for (auto& [k, v] : j.items()) v = without_timings(v);
  }
  return j;
}

std::map<std::string, std::string> numeric_artifacts(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto text = test::read_text(e.path());
    out[std::filesystem::relative(e.path(), root).string()] =
        e.path().extension() == ".json" ? without_timings(json::parse(text)).dump() : text;
  }
  return out;
}

Outcome determinism(const PipelineConfig& cfg) {
  const auto root = artifact_paths(cfg).root;
  const auto first = numeric_artifacts(root);
  run_reactor(cfg);
  const auto second = numeric_artifacts(root);
  std::size_t differing = 0;
  for (const auto& [name, text] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != text) ++differing;
  }
  const bool ok = differing == 0 && first.size() == second.size() && !first.empty();
  return {ok, fmt("%zu artifacts compared, %zu differ (timings excluded)", first.size(), differing)};
}

// ---- A4 ----
Outcome rank_selection(const SnapshotDataset& data) {
  const auto scaled = apply_scaling(data, fit_scaling(data, ScalingMode::kMinMax));
  Eigen::Index prev = 0;
  bool ok = true;
  std::string detail;
  for (double theta : {0.9990, 0.9995, 0.9999}) {
    const auto basis = compute_basis(scaled, {RankRule::energy(theta), true, false});
    ok = ok && basis.rank() >= prev;
    prev = basis.rank();
    detail += fmt("theta %.4f:", theta);
    for (const auto& b : basis.blocks()) {
      const auto e = cumulative_energy(b.singular_values);
      const bool minimal = e[b.rank - 1] >= theta && (b.rank == 1 || e[b.rank - 2] < theta);
      ok = ok && minimal;
      detail += fmt(" %s=%zu%s", b.name.c_str(), b.rank, minimal ? "" : "(not minimal)");
    }
    detail += fmt(" total %ld; ", static_cast<long>(basis.rank()));
  }
  return {ok, detail + "total rank non-decreasing, each rank minimal"};
}

// ---- A5 ----
// Short, exact data from a weakly damped system: the minimum-norm tsvd fit of seed 4
// has an eigenvalue in the right half-plane (found by searching seeds 0..199).
constexpr std::uint64_t kAdversarialSeed = 4;

RegressionProblem short_problem(std::uint64_t seed, Eigen::Index d, std::size_t samples, double horizon) {
  const auto ops = hurwitz_system(d, seed * 7 + 1, 0.5, 0.2, 0.1, 0.1);
  IntegrateOptions opt;
  opt.rtol = opt.atol = 1e-10;
  const auto grid = TimeGrid::uniform(0.0, horizon, samples);
  return problem_from(ops, integrate(ops, test::random_vector(d, seed * 7 + 4), grid, opt));
}

Outcome stability_certificate() {
  const auto start = std::chrono::steady_clock::now();
  SolverConfig cfg;
  cfg.backend = Backend::kStableGradient;
  cfg.gradient.max_epochs = 1500;
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t underdetermined = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(i % 3);
    const std::size_t samples = i % 2 == 0 ? static_cast<std::size_t>(d + 2) : 40;
    auto p = short_problem(1000 + i, d, samples, i % 2 == 0 ? 0.5 : 4.0);
    if (p.D.cols() < p.D.rows()) ++underdetermined;
    // Half the problems see noisy derivatives as well.
    if (i % 4 < 2) p.target += 0.05 * test::random_matrix(d, p.target.cols(), 5000 + i);
    cfg.gradient.seed = i;
    worst = std::max(worst, max_re_eig(solve_stable(p, cfg).fit.ops.A));
  }
  SolverConfig plain;
  plain.backend = Backend::kTsvd;
  const auto adversarial = short_problem(kAdversarialSeed, 3, 6, 0.5);
  const double tsvd_abscissa = max_re_eig(solve_tsvd(adversarial, plain).ops.A);
  const double stable_abscissa = max_re_eig(solve_stable(adversarial, cfg).fit.ops.A);
  const double secs = elapsed(start);
  const bool ok = worst < -1e-12 && stable_abscissa < -1e-12 && tsvd_abscissa > 0.0 && secs < 300.0;
  return {ok, fmt("20 problems (%zu underdetermined): worst max Re eig %.3e (< -1e-12); pinned seed %lu: tsvd %.3e "
                  "(> 0), stable %.3e; %.1f s (limit 300 s)",
                  underdetermined, worst, static_cast<unsigned long>(kAdversarialSeed), tsvd_abscissa,
                  stable_abscissa, secs)};
}

// ---- A6 ----
Outcome gradient_check() {
  const auto ops = hurwitz_system(3, 61, 0.3, 0.1, 0.2, 0.5);
  IntegrateOptions opt;
  opt.method = IntegrationMethod::kRk4Fixed;
  const auto grid = TimeGrid::uniform(0.0, 2.0, 21);
  const auto p = problem_from(ops, integrate(ops, test::random_vector(3, 62), grid, opt));
  SolverConfig cfg;
  cfg.backend = Backend::kStableGradient;
  const RolloutObjective objective(p, cfg);
  const Eigen::Index n = StableParameterization::parameter_count(3);
  std::mt19937_64 rng(63);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  double worst = 0.0;
  for (std::uint64_t point = 0; point < 3; ++point) {
    const Vector theta = 0.3 * test::random_vector(n, 70 + point);
    Vector grad;
    objective.value_and_gradient(theta, grad);
    Vector analytic(20), numeric(20);
    for (Eigen::Index k = 0; k < 20; ++k) {
      const Eigen::Index i = pick(rng);
      Vector plus = theta, minus = theta;
      plus(i) += 1e-6;
      minus(i) -= 1e-6;
      analytic(k) = grad(i);
      numeric(k) = (objective.value(plus) - objective.value(minus)) / 2e-6;
    }
    worst = std::max(worst, test::rel_err(numeric, analytic));
  }
  return {worst <= 1e-5, fmt("worst relative error %.2e over 3 points x 20 coordinates (tol 1e-5)", worst)};
}

// ---- A7 ----
Outcome numerical_kernels() {
  const QuadraticOperators decay(Matrix::Constant(1, 1, -1.0), Matrix::Zero(1, 1), Vector::Zero(1));
  auto rk4_error = [&](double h) {
    IntegrateOptions opt;
    opt.method = IntegrationMethod::kRk4Fixed;
    opt.max_step = h;
    return std::abs(integrate(decay, Vector::Ones(1), TimeGrid::uniform(0.0, 1.0, 2), opt).values(0, 1) -
                    std::exp(-1.0));
  };
  const double rk4_order = std::log2(rk4_error(0.1) / rk4_error(0.05));

  auto fd_error = [](std::size_t n) {
    const auto grid = TimeGrid::uniform(0.0, 2.0, n);
    Matrix x(1, static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) x(0, static_cast<Eigen::Index>(k)) = std::sin(grid[k]);
    const auto d = *estimate_derivatives(SnapshotDataset(x, grid, BlockLayout::single("x", 1)), DerivativeScheme::kAuto)
                        .derivatives();
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      worst = std::max(worst, std::abs(d(0, static_cast<Eigen::Index>(k)) - std::cos(grid[k])));
    }
    return worst;
  };
  const double fd_order = std::log2(fd_error(21) / fd_error(41));

  const Matrix x = test::random_matrix(30, 40, 77);
  const SnapshotDataset ds(x, TimeGrid::uniform(0.0, 1.0, 40), BlockLayout::single("x", 30));
  const auto basis = compute_basis(ds, {RankRule::fixed(5), false, false});
  const Vector sv = Eigen::JacobiSVD<Matrix>(x).singularValues();
  const double tail = sv.tail(sv.size() - 5).squaredNorm();
  const Matrix resid = x - basis.V() * (basis.V().transpose() * x);
  const double eckart_young = std::abs(resid.squaredNorm() - tail) / tail;

  const QuadraticOperators logistic(Matrix::Ones(1, 1), -Matrix::Ones(1, 1), Vector::Zero(1));
  const auto grid = TimeGrid::uniform(0.0, 5.0, 51);
  const auto traj = integrate(logistic, Vector::Constant(1, 0.5), grid);
  double logistic_err = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    logistic_err = std::max(logistic_err,
                            std::abs(traj.values(0, static_cast<Eigen::Index>(k)) - 1.0 / (1.0 + std::exp(-grid[k]))));
  }
  const bool ok = rk4_order >= 3.8 && rk4_order <= 4.2 && fd_order >= 1.8 && fd_order <= 2.2 &&
                  eckart_young <= 1e-8 && logistic_err <= 1e-6;
  return {ok, fmt("RK4 order %.3f [3.8, 4.2], FD order %.3f [1.8, 2.2], Eckart-Young %.1e (1e-8), logistic %.1e (1e-6)",
                  rk4_order, fd_order, eckart_young, logistic_err)};
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  test::TempDir dir("acceptance");
  const auto cfg = reactor_config(dir / "reactor");
  std::optional<ReactorRun> reactor;
  auto reactor_run = [&]() -> const ReactorRun& {
    if (!reactor) reactor = run_reactor(cfg);
    return *reactor;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1 exact operator recovery", exact_recovery},
      {"A2 Galerkin proximity (Burgers)", galerkin_proximity},
      {"A3 reactor-surrogate pipeline", [&] { return reactor_pipeline(reactor_run()); }},
      {"A4 rank-selection contract", [&] {
         reactor_run();
         return rank_selection(load_pipeline_dataset(cfg));
       }},
      {"A5 stability certificate", stability_certificate},
      {"A6 gradient check", gradient_check},
      {"A7 numerical kernels", numerical_kernels},
      {"A8 speedup", [&] { return speedup(reactor_run()); }},
      {"A9 determinism", [&] {
         reactor_run();
         return determinism(cfg);
       }},
  };

  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto r = guarded(check);
    if (!r.pass) ++failures;
    std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
