#include <doctest.h>

#include <cmath>

#include "opinf/error.hpp"
#include "opinf/fom.hpp"
#include "support.hpp"

using namespace opinf;

namespace {

// Central-difference Burgers right-hand side written directly from the stencils.
Vector burgers_loop(const BurgersConfig& cfg, const Vector& u) {
  const double h = cfg.length / static_cast<double>(cfg.n + 1);
  Vector out(cfg.n);
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const double ul = i == 0 ? cfg.left : u(i - 1);
    const double ur = i == cfg.n - 1 ? cfg.right : u(i + 1);
    out(i) = cfg.viscosity * (ul - 2.0 * u(i) + ur) / (h * h) - (ur * ur - ul * ul) / (4.0 * h);
  }
  return out;
}

// Finite-volume balance in face-flux form: inflow face carries the feed, outflow face
// has no dispersion, and the inlet dispersion uses a ghost cell at the feed temperature.
Vector reactor_loop(const ReactorSurrogateConfig& c, const Vector& s) {
  const Eigen::Index n = c.n_cells;
  const double h = c.length / static_cast<double>(n);
  Vector out(2 * n);
  auto X = [&](Eigen::Index i) { return i < 0 ? 0.0 : s(i); };
  auto T = [&](Eigen::Index i) { return i < 0 ? c.t_cool : s(n + i); };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double fx_in = c.velocity * X(i - 1), fx_out = c.velocity * X(i);
    const double ft_in = c.velocity * T(i - 1) - c.diffusion * (T(i) - T(i - 1)) / h;
    const double ft_out = c.velocity * T(i) - (i + 1 < n ? c.diffusion * (T(i + 1) - T(i)) / h : 0.0);
    const double rate = c.beta * (1.0 - X(i)) / (1.0 + std::exp(-c.gamma * (T(i) - c.t_ref)));
    out(i) = (fx_in - fx_out) / h + c.source_x * rate;
    out(n + i) = (ft_in - ft_out) / h - c.cooling * (T(i) - c.t_cool) + c.source_t * rate;
  }
  return out;
}

ReactorSurrogateConfig small_reactor() {
  ReactorSurrogateConfig c;
  c.n_cells = 12;
  return c;
}

Vector random_reactor_state(const ReactorSurrogateConfig& c, std::uint64_t seed) {
  Vector s(2 * c.n_cells);
  const Vector r = test::random_vector(2 * c.n_cells, seed);
  s.head(c.n_cells) = 0.5 + 0.2 * r.head(c.n_cells).array();
  s.tail(c.n_cells) = 650.0 + 60.0 * r.tail(c.n_cells).array();
  return s;
}

}  // namespace

TEST_CASE("Burgers operators match the stencil loop") {
  BurgersConfig cfg;
  cfg.n = 8;
  cfg.left = 0.3;
  cfg.right = -0.7;
  cfg.viscosity = 0.05;
  const auto ops = burgers_rhs_operators(cfg);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Vector u = test::random_vector(cfg.n, 500 + s);
    const Vector via = ops.A * u + ops.H * test::kron_oracle(u) + ops.C;
    CHECK(test::rel_err(via, burgers_loop(cfg, u)) <= 1e-12);
  }
  CHECK(ops.asymmetry() == 0.0);

  SUBCASE("zero data and zero state") {
    BurgersConfig z;
    z.n = 10;
    const auto o = burgers_rhs_operators(z);
    CHECK((o.A * Vector::Zero(10) + o.C).isZero(0.0));
  }
  SUBCASE("constant state equal to the boundary data") {
    BurgersConfig k;
    k.n = 10;
    k.left = k.right = 1.7;
    k.viscosity = 3.0;
    const auto o = burgers_rhs_operators(k);
    const Vector u = Vector::Constant(10, 1.7);
    CHECK((o.A * u + o.H * test::kron_oracle(u) + o.C).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("config validation") {
    BurgersConfig bad;
    bad.n = 2;
    CHECK_THROWS_AS(burgers_rhs_operators(bad), Error);
    bad.n = 10;
    bad.viscosity = 0.0;
    CHECK_THROWS_AS(burgers_rhs_operators(bad), Error);
  }
}

TEST_CASE("reactor right-hand side") {
  const auto c = small_reactor();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vector state = random_reactor_state(c, 40 + s);
    CHECK(test::rel_err(reactor_rhs(c, state), reactor_loop(c, state)) <= 1e-12);
  }

  SUBCASE("full conversion switches the source off") {
    Vector state = random_reactor_state(c, 7);
    state.head(c.n_cells).setOnes();
    for (Eigen::Index i = 0; i < c.n_cells; ++i) CHECK(reactor_source(c, 1.0, state(c.n_cells + i)) == 0.0);
    auto cold = c;
    cold.source_x = cold.source_t = 0.0;
    CHECK(reactor_rhs(c, state) == reactor_rhs(cold, state));
  }
  SUBCASE("cold quiescent start is nearly at rest") {
    auto cold = c;
    cold.t_ref = 2000.0;
    const Vector r = reactor_rhs(cold, reactor_initial_state(cold));
    const double tail = cold.beta / (1.0 + std::exp(cold.gamma * (cold.t_ref - cold.t_cool)));
    CHECK(r.head(c.n_cells).cwiseAbs().maxCoeff() <= cold.source_x * tail * (1.0 + 1e-12));
    CHECK(r.tail(c.n_cells).cwiseAbs().maxCoeff() <= cold.source_t * tail * (1.0 + 1e-12));
    CHECK(tail < 1e-10);
  }
  SUBCASE("non-finite state") {
    Vector state = random_reactor_state(c, 8);
    state(3) = std::nan("");
    CHECK_THROWS_AS(reactor_rhs(c, state), Error);
  }
  SUBCASE("Jacobian matches central differences") {
    const Vector state = random_reactor_state(c, 9);
    const Matrix jac = Matrix(reactor_jacobian(c, state));
    Matrix fd(2 * c.n_cells, 2 * c.n_cells);
    for (Eigen::Index j = 0; j < fd.cols(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(state(j)));
      Vector p = state, m = state;
      p(j) += h;
      m(j) -= h;
      fd.col(j) = (reactor_rhs(c, p) - reactor_rhs(c, m)) / (2.0 * h);
    }
    CHECK(test::rel_err(jac, fd) <= 1e-6);
  }
}

TEST_CASE("TR-BDF2 against analytic solutions") {
  SUBCASE("stiff linear decay") {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = -1.0;
    a(1, 1) = -1000.0;
    const auto sys = quadratic_system({a, Matrix::Zero(2, 4), Vector::Zero(2)});
    const auto grid = TimeGrid::uniform(0.0, 2.0, 21);
    const auto traj = integrate_trbdf2(sys, Vector::Ones(2), grid);
    for (std::size_t k = 1; k < grid.size(); ++k) {
      CHECK(traj.values(0, static_cast<Eigen::Index>(k)) == doctest::Approx(std::exp(-grid[k])).epsilon(1e-4));
      CHECK(std::abs(traj.values(1, static_cast<Eigen::Index>(k))) <= 1e-6);
    }
    CHECK(traj.steps < 500);  // the fast mode does not force tiny steps
  }
  SUBCASE("logistic growth") {
    const auto sys = quadratic_system({Matrix::Ones(1, 1), -Matrix::Ones(1, 1), Vector::Zero(1)});
    const auto grid = TimeGrid::uniform(0.0, 6.0, 31);
    ImplicitOptions opt;
    opt.rtol = 1e-8;
    opt.atol = 1e-10;
    const auto traj = integrate_trbdf2(sys, Vector::Constant(1, 0.5), grid, opt);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      CHECK(std::abs(traj.values(0, static_cast<Eigen::Index>(k)) - 1.0 / (1.0 + std::exp(-grid[k]))) <= 1e-6);
    }
  }
  SUBCASE("finite-time blow-up reports the last accepted time") {
    const auto sys = quadratic_system({Matrix::Zero(1, 1), Matrix::Ones(1, 1), Vector::Zero(1)});
    try {
      integrate_trbdf2(sys, Vector::Ones(1), TimeGrid::uniform(0.0, 2.0, 5));
      FAIL("expected a numerical error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumerical);
      CHECK(std::string(e.what()).find("last accepted time") != std::string::npos);
    }
  }
}

TEST_CASE("Burgers with strong viscosity decays to the boundary profile") {
  GenerateSpec spec;
  spec.model = FomKind::kBurgers;
  spec.burgers.n = 40;
  spec.burgers.viscosity = 1.0;
  spec.t1 = 1.0;
  spec.samples = 11;
  const auto run = generate_dataset(spec);
  const Matrix& x = run.data.states();
  CHECK(x.allFinite());
  CHECK(x.col(10).norm() <= 1e-3 * x.col(0).norm());
  CHECK(run.data.layout().blocks().size() == 1);
  CHECK(run.data.layout().at("u").rows == 40);
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    CHECK(test::rel_err(run.data.derivatives()->col(k), burgers_loop(spec.burgers, x.col(k))) <= 1e-12);
  }
}

TEST_CASE("reactor start-up") {
  const GenerateSpec spec;
  const auto run = generate_dataset(spec);
  const auto& ds = run.data;
  const Eigen::Index n = spec.reactor.n_cells;
  const Matrix x = ds.states().topRows(n);
  const Matrix t = ds.states().bottomRows(n);

  CHECK(ds.layout().at("X").rows == n);
  CHECK(ds.layout().at("T").offset == n);
  CHECK(x.minCoeff() >= -1e-6);
  CHECK(x.maxCoeff() <= 1.0 + 1e-6);

  // Ignition: the peak temperature climbs by a few hundred kelvin, then levels off.
  const Vector peak = t.colwise().maxCoeff();
  CHECK(peak(0) == doctest::Approx(spec.reactor.t_cool));
  CHECK(peak.maxCoeff() - spec.reactor.t_cool >= 100.0);
  CHECK(x(n - 1, ds.snapshot_count() - 1) >= 0.8);
  const Eigen::Index last = ds.snapshot_count() - 1;
  const Eigen::Index early = last - static_cast<Eigen::Index>(std::ceil(0.05 * static_cast<double>(last)));
  const double change = (ds.states().col(last) - ds.states().col(early)).norm() / ds.states().col(last).norm();
  CHECK(change < 1e-3);

  for (Eigen::Index k = 0; k < ds.snapshot_count(); ++k) {
    CHECK(ds.derivatives()->col(k) == reactor_rhs(spec.reactor, ds.states().col(k)));
  }

  const auto again = generate_dataset(spec);
  CHECK(again.data.states() == ds.states());
  CHECK(*again.data.derivatives() == *ds.derivatives());
  CHECK(again.steps == run.steps);
}

TEST_CASE("reactor grid refinement") {
  GenerateSpec coarse;
  coarse.samples = 3;
  GenerateSpec fine = coarse;
  fine.reactor.n_cells = 2 * coarse.reactor.n_cells;
  const Vector a = generate_dataset(coarse).data.states().col(2);
  const Vector b = generate_dataset(fine).data.states().col(2);
  const Eigen::Index n = coarse.reactor.n_cells;
  // Each coarse cell centre sits midway between two fine cell centres.
  Vector b_on_coarse(2 * n);
  for (Eigen::Index f = 0; f < 2; ++f) {
    for (Eigen::Index i = 0; i < n; ++i) {
      b_on_coarse(f * n + i) = 0.5 * (b(f * 2 * n + 2 * i) + b(f * 2 * n + 2 * i + 1));
    }
  }
  CHECK((a - b_on_coarse).norm() / a.norm() < 0.05);
  CHECK((a.head(n) - b_on_coarse.head(n)).norm() / a.head(n).norm() < 0.05);
}

TEST_CASE("generate spec validation and names") {
  CHECK(parse_fom_kind("burgers") == FomKind::kBurgers);
  CHECK(to_string(FomIntegrator::kImplicitTrbdf) == "implicit-trbdf");
  CHECK(parse_fom_integrator("rk45-adaptive") == FomIntegrator::kRk45Adaptive);
  CHECK_THROWS_AS(parse_fom_kind("methanation"), Error);
  GenerateSpec bad;
  bad.t1 = bad.t0;
  CHECK_THROWS_AS(generate_dataset(bad), Error);
  ReactorSurrogateConfig r;
  r.velocity = 0.0;
  GenerateSpec bad_r;
  bad_r.reactor = r;
  CHECK_THROWS_AS(generate_dataset(bad_r), Error);

  // The explicit option reaches the same state on the small reactor.
  GenerateSpec a;
  a.reactor.n_cells = 20;
  a.samples = 11;
  GenerateSpec b = a;
  b.integrator = FomIntegrator::kRk45Adaptive;
  const auto ra = generate_dataset(a).data.states();
  const auto rb = generate_dataset(b).data.states();
  CHECK(test::rel_err(rb, ra) <= 1e-4);
}
