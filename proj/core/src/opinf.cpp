#include "opinf/opinf.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "json_io.hpp"
#include "opinf/csv.hpp"
#include "opinf/error.hpp"

namespace opinf {

RegressionProblem assemble_problem(const SnapshotDataset& reduced) {
  if (!reduced.has_derivatives()) {
    fail_validation("cannot assemble the regression problem: reduced dataset has no derivatives");
  }
  const Matrix& x = reduced.states();
  const Eigen::Index r = x.rows();
  const Eigen::Index m = x.cols();
  Matrix d(r + r * r + 1, m);
  d.topRows(r) = x;
  d.middleRows(r, r * r) = kron_square_columns(x);
  d.bottomRows(1).setOnes();
  return {std::move(d), *reduced.derivatives(), reduced.grid()};
}

Backend parse_backend(const std::string& name) {
  if (name == "tsvd") return Backend::kTsvd;
  if (name == "tikhonov") return Backend::kTikhonov;
  if (name == "stable-gradient") return Backend::kStableGradient;
  fail_validation("unknown solver backend '" + name + "'");
}

std::string to_string(Backend backend) {
  switch (backend) {
    case Backend::kTsvd:
      return "tsvd";
    case Backend::kTikhonov:
      return "tikhonov";
    case Backend::kStableGradient:
      return "stable-gradient";
  }
  return "tsvd";
}

void SolverConfig::validate() const {
  require(alpha_A >= 0.0 && alpha_H >= 0.0 && alpha_C >= 0.0,
          "regularization weights must be non-negative");
  if (tsvd_rank) require(*tsvd_rank >= 1, "tsvd rank must be positive");
  if (tsvd_energy) require(*tsvd_energy > 0.0 && *tsvd_energy <= 1.0, "tsvd energy must lie in (0, 1]");
  require(gradient.lr_min > 0.0 && gradient.lr_max >= gradient.lr_min,
          "learning-rate bounds must satisfy 0 < lr_min <= lr_max");
  require(gradient.epsilon > 0.0, "stable-parameterization floor must be positive");
  require(gradient.half_cycle >= 1, "learning-rate half cycle must be at least 1 epoch");
}

namespace {

void check_problem(const RegressionProblem& p) {
  const Eigen::Index r = p.target.rows();
  require(p.D.rows() == r + r * r + 1, "data matrix must have r + r^2 + 1 rows");
  require(p.D.cols() == p.target.cols(), "data matrix and target have different column counts");
}

}  // namespace

FitResult solve_tsvd(const RegressionProblem& p, const SolverConfig& cfg) {
  cfg.validate();
  check_problem(p);
  const Eigen::Index r = p.dimension();
  Eigen::BDCSVD<Matrix> svd(p.D, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? kRankCutoff * s(0) : 0.0;
  Eigen::Index achievable = 0;
  while (achievable < s.size() && s(achievable) > cutoff) ++achievable;

  Eigen::Index keep = achievable;
  if (cfg.tsvd_rank) {
    const Eigen::Index cap = std::min(p.D.rows(), p.D.cols());
    require(*cfg.tsvd_rank <= cap, "tsvd rank " + std::to_string(*cfg.tsvd_rank) +
                                       " exceeds min(r + r^2 + 1, k + 1) = " + std::to_string(cap));
    if (*cfg.tsvd_rank > achievable) {
      fail_numerical("rank deficiency: requested tsvd rank " + std::to_string(*cfg.tsvd_rank) +
                     " but the data matrix has numerical rank " + std::to_string(achievable));
    }
    keep = *cfg.tsvd_rank;
  } else if (cfg.tsvd_energy) {
    const double total = s.head(achievable).squaredNorm();
    double acc = 0.0;
    keep = 0;
    // Equal singular values keep the earlier index.
    while (keep < achievable && (total == 0.0 || acc / total < *cfg.tsvd_energy)) {
      acc += s(keep) * s(keep);
      ++keep;
    }
  }

  FitResult out;
  out.backend_used = Backend::kTsvd;
  out.tsvd_rank_used = keep;
  if (keep == 0) {
    out.ops = QuadraticOperators::zero(r);
  } else {
    const Matrix u = svd.matrixU().leftCols(keep);
    const Matrix v = svd.matrixV().leftCols(keep);
    const Vector inv = s.head(keep).cwiseInverse();
    // O = target V S^-1 U^T
    const Matrix o = ((p.target * v) * inv.asDiagonal()) * u.transpose();
    out.ops = QuadraticOperators::from_stacked(o);
  }
  out.ops.H = symmetrize_quadratic(out.ops.H);
  out.residual = residual(p, out.ops);
  return out;
}

FitResult solve_tikhonov(const RegressionProblem& p, const SolverConfig& cfg) {
  cfg.validate();
  check_problem(p);
  const Eigen::Index r = p.dimension();
  const Eigen::Index q = r + r * r + 1;
  Vector gamma2(q);
  gamma2.head(r).setConstant(cfg.alpha_A);
  gamma2.segment(r, r * r).setConstant(cfg.alpha_H);
  gamma2(q - 1) = cfg.alpha_C;

  Matrix gram = p.D * p.D.transpose();
  gram.diagonal() += gamma2;
  const Matrix rhs = p.D * p.target.transpose();

  Eigen::LLT<Matrix> llt(gram);
  // With some penalty active the factorization is trusted as long as it succeeds.
  const bool unregularized = gamma2.maxCoeff() == 0.0;
  const bool singular = llt.info() != Eigen::Success ||
                        (unregularized && llt.rcond() < 1e3 * std::numeric_limits<double>::epsilon());
  if (singular && !unregularized) {
    // Same minimizer from the stacked system [D^T; Gamma] O^T = [target^T; 0], which
    // avoids squaring the condition number of D.
    Matrix stacked(p.D.cols() + q, q);
    stacked.topRows(p.D.cols()) = p.D.transpose();
    stacked.bottomRows(q) = gamma2.cwiseSqrt().asDiagonal();
    Matrix rhs_stacked = Matrix::Zero(p.D.cols() + q, r);
    rhs_stacked.topRows(p.D.cols()) = p.target.transpose();
    const Matrix ot = stacked.colPivHouseholderQr().solve(rhs_stacked);
    FitResult out;
    out.backend_used = Backend::kTikhonov;
    out.ops = QuadraticOperators::from_stacked(ot.transpose());
    out.ops.H = symmetrize_quadratic(out.ops.H);
    out.residual = residual(p, out.ops);
    out.note = "normal equations not numerically positive definite; solved the stacked least-squares form";
    return out;
  }
  if (singular) {
    SolverConfig full = cfg;
    full.tsvd_rank.reset();
    full.tsvd_energy.reset();
    FitResult out = solve_tsvd(p, full);
    out.fell_back_to_tsvd = true;
    out.note = "normal equations singular; solved with full-rank truncated SVD";
    return out;
  }
  const Matrix ot = llt.solve(rhs);
  FitResult out;
  out.backend_used = Backend::kTikhonov;
  out.ops = QuadraticOperators::from_stacked(ot.transpose());
  out.ops.H = symmetrize_quadratic(out.ops.H);
  out.residual = residual(p, out.ops);
  return out;
}

double residual(const RegressionProblem& p, const QuadraticOperators& ops) {
  check_problem(p);
  require(ops.dimension() == p.dimension(), "operator dimension does not match the problem");
  const double res = (p.target - ops.stacked() * p.D).norm();
  const double norm = p.target.norm();
  return norm > 0.0 ? res / norm : res;
}

void save_operators(const std::filesystem::path& dir, const QuadraticOperators& ops,
                    const OperatorFileInfo& info) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail_io("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json j;
  j["d"] = ops.dimension();
  j["format"] = "dense";
  j["symmetrized"] = ops.asymmetry() == 0.0;
  j["backend"] = info.backend;
  try {
    j["config"] = nlohmann::json::parse(info.config_json);
  } catch (const nlohmann::json::exception&) {
    fail_validation("operator config echo is not valid JSON");
  }
  j["residual"] = info.residual;
  detail::write_json(dir / "operators.json", j);
  write_matrix_csv(dir / "A.csv", ops.A);
  write_matrix_csv(dir / "H.csv", ops.H);
  write_matrix_csv(dir / "C.csv", ops.C);
}

QuadraticOperators load_operators(const std::filesystem::path& dir, OperatorFileInfo* info) {
  const auto j = detail::read_json(dir / "operators.json");
  Eigen::Index d = 0;
  try {
    d = j.at("d").get<Eigen::Index>();
    if (j.at("format").get<std::string>() != "dense") fail_io("unsupported operator format in " + dir.string());
    if (info) {
      info->backend = j.at("backend").get<std::string>();
      info->config_json = j.at("config").dump();
      info->residual = j.at("residual").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail_io("malformed operator header in " + dir.string() + ": " + e.what());
  }
  Matrix a = read_matrix_csv(dir / "A.csv");
  Matrix h = read_matrix_csv(dir / "H.csv");
  Matrix c = read_matrix_csv(dir / "C.csv");
  if (a.rows() != d || h.rows() != d || c.rows() != d || c.cols() != 1) {
    fail_io("operator payloads in " + dir.string() + " do not match d = " + std::to_string(d));
  }
  return {std::move(a), std::move(h), c.col(0)};
}

}  // namespace opinf
