#include "opinf/pod.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "json_io.hpp"
#include "opinf/csv.hpp"
#include "opinf/error.hpp"

namespace opinf {

RankRule RankRule::energy(double theta) {
  RankRule r;
  r.kind = Kind::kEnergy;
  r.theta = theta;
  r.validate();
  return r;
}

RankRule RankRule::fixed(std::size_t rank) {
  RankRule r;
  r.kind = Kind::kFixed;
  r.rank = rank;
  r.validate();
  return r;
}

RankRule RankRule::fixed(std::map<std::string, std::size_t> block_ranks) {
  RankRule r;
  r.kind = Kind::kFixed;
  r.block_ranks = std::move(block_ranks);
  r.validate();
  return r;
}

void RankRule::validate() const {
  if (kind == Kind::kEnergy) {
    require(theta > 0.0 && theta <= 1.0, "energy threshold theta must lie in (0, 1]");
    return;
  }
  if (block_ranks.empty()) require(rank >= 1, "fixed rank must be at least 1");
  for (const auto& [name, r] : block_ranks) {
    require(r >= 1, "fixed rank for block '" + name + "' must be at least 1");
  }
}

std::vector<double> cumulative_energy(const Vector& s) {
  std::vector<double> out(static_cast<std::size_t>(s.size()));
  const double total = s.squaredNorm();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    acc += s(i) * s(i);
    out[static_cast<std::size_t>(i)] = total > 0.0 ? acc / total : 1.0;
  }
  if (!out.empty()) out.back() = 1.0;
  return out;
}

std::size_t rank_for_energy(const Vector& s, double theta) {
  const auto e = cumulative_energy(s);
  for (std::size_t r = 0; r < e.size(); ++r) {
    if (e[r] >= theta) return r + 1;
  }
  return e.size();
}

// ---- PodBasis ----

PodBasis::PodBasis(Matrix v, std::vector<BasisBlock> blocks, BlockLayout state_layout)
    : v_(std::move(v)), blocks_(std::move(blocks)), state_layout_(std::move(state_layout)) {
  state_layout_.validate(v_.rows());
  Eigen::Index cols = 0;
  for (const auto& b : blocks_) {
    require(b.col_offset == cols, "basis blocks must tile the columns of V in order");
    require(b.row_offset >= 0 && b.row_offset + b.row_count <= v_.rows(),
            "basis block rows out of range");
    cols += static_cast<Eigen::Index>(b.rank);
  }
  require(cols == v_.cols(), "basis block ranks do not sum to the column count of V");
}

bool PodBasis::blockwise() const noexcept {
  // A basis is blockwise when each of its blocks spans exactly one state block.
  if (blocks_.size() != state_layout_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& sb = state_layout_.blocks()[i];
    if (blocks_[i].row_offset != sb.offset || blocks_[i].row_count != sb.rows) return false;
  }
  return true;
}

BlockLayout PodBasis::reduced_layout() const {
  std::vector<std::pair<std::string, Eigen::Index>> sizes;
  for (const auto& b : blocks_) sizes.emplace_back(b.name, static_cast<Eigen::Index>(b.rank));
  return BlockLayout::from_sizes(sizes);
}

std::map<std::string, double> PodBasis::captured_energy() const {
  std::map<std::string, double> out;
  for (const auto& b : blocks_) {
    const auto e = cumulative_energy(b.singular_values);
    out[b.name] = b.rank == 0 || e.empty() ? 0.0 : e[std::min(b.rank, e.size()) - 1];
  }
  return out;
}

double PodBasis::orthonormality_defect() const {
  const Matrix g = v_.transpose() * v_;
  return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

// ---- construction ----

namespace {

struct BlockSvd {
  Matrix u;
  Vector s;
};

BlockSvd thin_svd(const Matrix& x, bool center) {
  Matrix work = x;
  if (center) work.colwise() -= x.rowwise().mean();
  Eigen::BDCSVD<Matrix> svd(work, Eigen::ComputeThinU);
  return {svd.matrixU(), svd.singularValues()};
}

// Largest-magnitude entry of each column made positive (first index wins ties).
void fix_signs(Eigen::Ref<Matrix> u) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      if (std::abs(u(i, j)) > best) {
        best = std::abs(u(i, j));
        arg = i;
      }
    }
    if (u(arg, j) < 0.0) u.col(j) *= -1.0;
  }
}

std::size_t choose_rank(const RankRule& rule, const std::string& block, const Vector& s,
                        Eigen::Index rows, Eigen::Index cols) {
  const auto cap = static_cast<std::size_t>(std::min(rows, cols));
  if (rule.kind == RankRule::Kind::kEnergy) return std::min(rank_for_energy(s, rule.theta), cap);
  std::size_t r = rule.rank;
  if (!rule.block_ranks.empty()) {
    auto it = rule.block_ranks.find(block);
    if (it == rule.block_ranks.end()) fail_validation("no fixed rank given for block '" + block + "'");
    r = it->second;
  }
  if (r > cap) {
    fail_validation("requested rank " + std::to_string(r) + " for block '" + block +
                    "' exceeds min(n, k+1) = " + std::to_string(cap));
  }
  return r;
}

}  // namespace

PodBasis compute_basis(const SnapshotDataset& ds, const BasisOptions& options) {
  options.rule.validate();
  const Matrix& x = ds.states();
  require(x.size() > 0, "cannot build a basis from an empty dataset");

  std::vector<BasisBlock> blocks;
  std::vector<Matrix> modes;
  if (options.blockwise) {
    for (const auto& b : ds.layout().blocks()) {
      auto svd = thin_svd(x.middleRows(b.offset, b.rows), options.center);
      const std::size_t r = choose_rank(options.rule, b.name, svd.s, b.rows, x.cols());
      blocks.push_back({b.name, b.offset, b.rows, 0, r, svd.s});
      modes.push_back(svd.u.leftCols(static_cast<Eigen::Index>(r)));
    }
  } else {
    if (!options.rule.block_ranks.empty() && options.rule.kind == RankRule::Kind::kFixed) {
      fail_validation("per-block fixed ranks require a blockwise basis");
    }
    auto svd = thin_svd(x, options.center);
    const std::size_t r = choose_rank(options.rule, "modes", svd.s, x.rows(), x.cols());
    blocks.push_back({"modes", 0, x.rows(), 0, r, svd.s});
    modes.push_back(svd.u.leftCols(static_cast<Eigen::Index>(r)));
  }

  Eigen::Index total = 0;
  for (auto& b : blocks) {
    b.col_offset = total;
    total += static_cast<Eigen::Index>(b.rank);
  }
  Matrix v = Matrix::Zero(x.rows(), total);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    fix_signs(modes[i]);
    v.block(b.row_offset, b.col_offset, b.row_count, static_cast<Eigen::Index>(b.rank)) = modes[i];
  }
  return PodBasis(std::move(v), std::move(blocks), ds.layout());
}

double projection_error(const SnapshotDataset& ds, const PodBasis& basis) {
  require(basis.full_dimension() == ds.dimension(),
          "basis has " + std::to_string(basis.full_dimension()) + " rows, dataset has " +
              std::to_string(ds.dimension()));
  const Matrix& x = ds.states();
  const double norm = x.norm();
  if (norm == 0.0) return 0.0;
  const Matrix& v = basis.V();
  return (x - v * (v.transpose() * x)).norm() / norm;
}

SnapshotDataset project(const SnapshotDataset& ds, const PodBasis& basis) {
  require(basis.full_dimension() == ds.dimension(),
          "basis has " + std::to_string(basis.full_dimension()) + " rows, dataset has " +
              std::to_string(ds.dimension()));
  const Matrix vt = basis.V().transpose();
  std::optional<Matrix> deriv;
  if (ds.derivatives()) deriv = vt * *ds.derivatives();
  return SnapshotDataset(vt * ds.states(), ds.grid(), basis.reduced_layout(), std::move(deriv));
}

SnapshotDataset lift(const SnapshotDataset& reduced, const PodBasis& basis) {
  require(basis.rank() == reduced.dimension(),
          "basis has " + std::to_string(basis.rank()) + " columns, reduced data has " +
              std::to_string(reduced.dimension()) + " rows");
  const Matrix& v = basis.V();
  std::optional<Matrix> deriv;
  if (reduced.derivatives()) deriv = v * *reduced.derivatives();
  return SnapshotDataset(v * reduced.states(), reduced.grid(), basis.state_layout(),
                         std::move(deriv));
}

QuadraticOperators galerkin_rom(const QuadraticOperators& full, const Matrix& v) {
  const Eigen::Index n = full.dimension();
  const Eigen::Index r = v.cols();
  require(v.rows() == n, "Galerkin projection: basis has " + std::to_string(v.rows()) +
                             " rows, operators have dimension " + std::to_string(n));
  const Matrix vt = v.transpose();
  // Row k of H reshaped to M_k(p, q) = H(k, p*n + q); (V^T M_k V)(i, j) is row k of H (V ⊗ V).
  Matrix hv(n, r * r);
  Vector row(n * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    row = full.H.row(k).transpose();
    // Column-major map of the row gives M_k^T.
    Eigen::Map<const Matrix> mt(row.data(), n, n);
    const Matrix proj = vt * mt.transpose() * v;
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < r; ++j) hv(k, i * r + j) = proj(i, j);
    }
  }
  return {vt * full.A * v, symmetrize_quadratic(vt * hv), vt * full.C};
}

// ---- files ----

void save_basis(const std::filesystem::path& stem, const PodBasis& basis,
                const ScalingTransform& scaling) {
  auto csv = stem;
  csv += ".csv";
  auto json_path = stem;
  json_path += ".json";
  write_matrix_csv(csv, basis.V());

  nlohmann::json j;
  nlohmann::json ranks = nlohmann::json::object();
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : basis.blocks()) {
    ranks[b.name] = b.rank;
    blocks.push_back({{"name", b.name},
                      {"row_offset", b.row_offset},
                      {"row_count", b.row_count},
                      {"col_offset", b.col_offset},
                      {"rank", b.rank},
                      {"singular_values", detail::vector_to_json(b.singular_values)}});
  }
  if (basis.blocks().size() == 1) {
    j["singular_values"] = detail::vector_to_json(basis.blocks()[0].singular_values);
  } else {
    nlohmann::json sv = nlohmann::json::object();
    for (const auto& b : basis.blocks()) sv[b.name] = detail::vector_to_json(b.singular_values);
    j["singular_values"] = sv;
  }
  j["block_ranks"] = ranks;
  j["blocks"] = blocks;
  j["state_layout"] = detail::layout_to_json(basis.state_layout());
  j["scaling"] = detail::scaling_to_json(scaling);
  detail::write_json(json_path, j);
}

std::pair<PodBasis, ScalingTransform> load_basis(const std::filesystem::path& stem) {
  auto csv = stem;
  csv += ".csv";
  auto json_path = stem;
  json_path += ".json";
  Matrix v = read_matrix_csv(csv);
  const auto j = detail::read_json(json_path);
  try {
    std::vector<BasisBlock> blocks;
    for (const auto& b : j.at("blocks")) {
      blocks.push_back({b.at("name").get<std::string>(), b.at("row_offset").get<Eigen::Index>(),
                        b.at("row_count").get<Eigen::Index>(),
                        b.at("col_offset").get<Eigen::Index>(), b.at("rank").get<std::size_t>(),
                        detail::vector_from_json(b.at("singular_values"))});
    }
    BlockLayout layout = detail::layout_from_json(j.at("state_layout"));
    ScalingTransform scaling = detail::scaling_from_json(j.at("scaling"));
    if (v.rows() == 0) v.resize(layout.total_rows(), 0);
    return {PodBasis(std::move(v), std::move(blocks), std::move(layout)), std::move(scaling)};
  } catch (const nlohmann::json::exception& e) {
    fail_io("malformed basis sidecar " + json_path.string() + ": " + e.what());
  }
}

}  // namespace opinf
