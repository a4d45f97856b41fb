#include "opinf/snapshots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "opinf/csv.hpp"
#include "opinf/error.hpp"

namespace opinf {

// ---- TimeGrid ----

TimeGrid::TimeGrid(std::vector<double> instants) : instants_(std::move(instants)) {
  require(instants_.size() >= 2, "time grid needs at least 2 instants");
  for (std::size_t i = 0; i < instants_.size(); ++i) {
    require(std::isfinite(instants_[i]), "time grid contains a non-finite instant");
    if (i > 0 && !(instants_[i] > instants_[i - 1])) {
      fail_validation("time grid not strictly increasing at index " + std::to_string(i));
    }
  }
}

TimeGrid TimeGrid::uniform(double t0, double t1, std::size_t count) {
  require(count >= 2, "uniform grid needs at least 2 instants");
  require(t1 > t0, "uniform grid needs t1 > t0");
  std::vector<double> t(count);
  const double h = (t1 - t0) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) t[i] = t0 + h * static_cast<double>(i);
  t.back() = t1;
  return TimeGrid(std::move(t));
}

double TimeGrid::min_spacing() const {
  double h = instants_[1] - instants_[0];
  for (std::size_t i = 2; i < instants_.size(); ++i) h = std::min(h, instants_[i] - instants_[i - 1]);
  return h;
}

// ---- BlockLayout ----

BlockLayout BlockLayout::from_sizes(
    const std::vector<std::pair<std::string, Eigen::Index>>& sizes) {
  BlockLayout layout;
  Eigen::Index offset = 0;
  for (const auto& [name, rows] : sizes) {
    require(!name.empty(), "block name must be non-empty");
    require(rows > 0, "block '" + name + "' must have a positive row count");
    for (const auto& b : layout.blocks_) {
      require(b.name != name, "duplicate block name '" + name + "'");
    }
    layout.blocks_.push_back({name, offset, rows});
    offset += rows;
  }
  return layout;
}

BlockLayout BlockLayout::single(const std::string& name, Eigen::Index rows) {
  return from_sizes({{name, rows}});
}

Eigen::Index BlockLayout::total_rows() const {
  Eigen::Index n = 0;
  for (const auto& b : blocks_) n += b.rows;
  return n;
}

const Block& BlockLayout::at(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  fail_validation("unknown block '" + name + "'");
}

void BlockLayout::validate(Eigen::Index n) const {
  require(!blocks_.empty(), "layout error: no blocks declared");
  Eigen::Index expected = 0;
  for (const auto& b : blocks_) {
    if (b.offset != expected || b.rows <= 0) {
      fail_validation("layout error: block '" + b.name + "' is not contiguous");
    }
    expected += b.rows;
  }
  if (expected != n) {
    fail_validation("layout error: blocks cover " + std::to_string(expected) + " rows, state has " +
                    std::to_string(n));
  }
}

// ---- SnapshotDataset ----

SnapshotDataset::SnapshotDataset(Matrix states, TimeGrid grid, BlockLayout layout,
                                 std::optional<Matrix> derivatives)
    : states_(std::move(states)),
      grid_(std::move(grid)),
      layout_(std::move(layout)),
      derivatives_(std::move(derivatives)) {
  require(states_.cols() == static_cast<Eigen::Index>(grid_.size()),
          "states have " + std::to_string(states_.cols()) + " columns but the grid has " +
              std::to_string(grid_.size()) + " instants");
  layout_.validate(states_.rows());
  if (derivatives_) {
    require(derivatives_->rows() == states_.rows() && derivatives_->cols() == states_.cols(),
            "derivative matrix shape differs from state matrix shape");
  }
}

SnapshotDataset SnapshotDataset::with_derivatives(Matrix derivatives) const {
  return SnapshotDataset(states_, grid_, layout_, std::move(derivatives));
}

SnapshotDataset SnapshotDataset::without_derivatives() const {
  return SnapshotDataset(states_, grid_, layout_);
}

// ---- derivatives ----

DerivativeScheme parse_derivative_scheme(const std::string& name) {
  if (name == "central-2") return DerivativeScheme::kCentral2;
  if (name == "forward-1") return DerivativeScheme::kForward1;
  if (name == "backward-1") return DerivativeScheme::kBackward1;
  if (name == "auto") return DerivativeScheme::kAuto;
  fail_validation("unknown derivative scheme '" + name + "'");
}

namespace {

// Weights of the derivative at t[at] of the Lagrange interpolant through t[i0], t[i1], t[i2].
std::array<double, 3> lagrange3_weights(const std::vector<double>& t, std::size_t i0,
                                        std::size_t i1, std::size_t i2, std::size_t at) {
  const double x = t[at];
  const double a = t[i0];
  const double b = t[i1];
  const double c = t[i2];
  return {(2.0 * x - b - c) / ((a - b) * (a - c)), (2.0 * x - a - c) / ((b - a) * (b - c)),
          (2.0 * x - a - b) / ((c - a) * (c - b))};
}

// Applies the weights as sum_k w_k (x_k - x_at); the weights sum to zero, and this
// form keeps constant data at exactly zero derivative.
Vector stencil3(const Matrix& x, const std::vector<double>& t, std::size_t i0, std::size_t at) {
  const auto w = lagrange3_weights(t, i0, i0 + 1, i0 + 2, at);
  Vector out = Vector::Zero(x.rows());
  for (std::size_t k = 0; k < 3; ++k) {
    if (i0 + k != at) out += w[k] * (x.col(static_cast<Eigen::Index>(i0 + k)) - x.col(static_cast<Eigen::Index>(at)));
  }
  return out;
}

}  // namespace

SnapshotDataset estimate_derivatives(const SnapshotDataset& ds, DerivativeScheme scheme,
                                     bool overwrite) {
  if (ds.has_derivatives() && !overwrite) {
    fail_validation("dataset already carries derivatives; pass overwrite to replace them");
  }
  const auto& t = ds.grid().instants();
  const std::size_t m = t.size();
  const Matrix& x = ds.states();
  Matrix dx(x.rows(), x.cols());

  const bool central = scheme == DerivativeScheme::kCentral2 || scheme == DerivativeScheme::kAuto;
  if (scheme == DerivativeScheme::kCentral2 && m < 3) {
    fail_validation("central-2 scheme needs at least 3 instants, grid has " + std::to_string(m));
  }
  if (central && m >= 3) {
    for (std::size_t i = 1; i + 1 < m; ++i) dx.col(static_cast<Eigen::Index>(i)) = stencil3(x, t, i - 1, i);
    if (scheme == DerivativeScheme::kAuto) {
      dx.col(0) = stencil3(x, t, 0, 0);
      dx.col(static_cast<Eigen::Index>(m - 1)) = stencil3(x, t, m - 3, m - 1);
    } else {
      dx.col(0) = (x.col(1) - x.col(0)) / (t[1] - t[0]);
      dx.col(m - 1) = (x.col(m - 1) - x.col(m - 2)) / (t[m - 1] - t[m - 2]);
    }
    return ds.with_derivatives(std::move(dx));
  }

  // One-sided first-order schemes (also the `auto` fallback on 2-point grids).
  const bool forward = scheme != DerivativeScheme::kBackward1;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t lo = 0;
    if (forward) {
      lo = i + 1 < m ? i : i - 1;
    } else {
      lo = i > 0 ? i - 1 : 0;
    }
    dx.col(i) = (x.col(lo + 1) - x.col(lo)) / (t[lo + 1] - t[lo]);
  }
  return ds.with_derivatives(std::move(dx));
}

// ---- scaling ----

ScalingMode parse_scaling_mode(const std::string& name) {
  if (name == "none") return ScalingMode::kNone;
  if (name == "min-max") return ScalingMode::kMinMax;
  if (name == "mean-std") return ScalingMode::kMeanStd;
  fail_validation("unknown scaling mode '" + name + "'");
}

std::string to_string(ScalingMode mode) {
  switch (mode) {
    case ScalingMode::kNone:
      return "none";
    case ScalingMode::kMinMax:
      return "min-max";
    case ScalingMode::kMeanStd:
      return "mean-std";
  }
  return "none";
}

ScalingTransform::ScalingTransform(ScalingMode mode, std::vector<BlockScaling> blocks)
    : mode_(mode), blocks_(std::move(blocks)) {
  for (const auto& b : blocks_) {
    require(std::isfinite(b.shift), "scaling shift for block '" + b.name + "' is not finite");
    require(std::isfinite(b.scale) && b.scale > 0.0,
            "scaling for block '" + b.name + "' must be positive");
  }
}

ScalingTransform ScalingTransform::identity(const BlockLayout& layout) {
  std::vector<BlockScaling> blocks;
  for (const auto& b : layout.blocks()) blocks.push_back({b.name, 0.0, 1.0});
  return ScalingTransform(ScalingMode::kNone, std::move(blocks));
}

void ScalingTransform::check_layout(const BlockLayout& layout) const {
  if (layout.size() != blocks_.size()) {
    fail_validation("scaling has " + std::to_string(blocks_.size()) + " blocks, data has " +
                    std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (layout.blocks()[i].name != blocks_[i].name) {
      fail_validation("scaling block '" + blocks_[i].name + "' does not match data block '" +
                      layout.blocks()[i].name + "'");
    }
  }
}

Matrix ScalingTransform::apply_states(const Matrix& x, const BlockLayout& layout) const {
  check_layout(layout);
  Matrix out = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = layout.blocks()[i];
    out.middleRows(b.offset, b.rows) =
        (x.middleRows(b.offset, b.rows).array() - blocks_[i].shift) / blocks_[i].scale;
  }
  return out;
}

Matrix ScalingTransform::unapply_states(const Matrix& x, const BlockLayout& layout) const {
  check_layout(layout);
  Matrix out = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = layout.blocks()[i];
    out.middleRows(b.offset, b.rows) =
        x.middleRows(b.offset, b.rows).array() * blocks_[i].scale + blocks_[i].shift;
  }
  return out;
}

Matrix ScalingTransform::apply_rates(const Matrix& dx, const BlockLayout& layout) const {
  check_layout(layout);
  Matrix out = dx;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = layout.blocks()[i];
    out.middleRows(b.offset, b.rows) = dx.middleRows(b.offset, b.rows) / blocks_[i].scale;
  }
  return out;
}

Matrix ScalingTransform::unapply_rates(const Matrix& dx, const BlockLayout& layout) const {
  check_layout(layout);
  Matrix out = dx;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = layout.blocks()[i];
    out.middleRows(b.offset, b.rows) = dx.middleRows(b.offset, b.rows) * blocks_[i].scale;
  }
  return out;
}

ScalingTransform fit_scaling(const SnapshotDataset& ds, ScalingMode mode) {
  std::vector<BlockScaling> blocks;
  for (const auto& b : ds.layout().blocks()) {
    const auto block = ds.states().middleRows(b.offset, b.rows);
    BlockScaling s{b.name, 0.0, 1.0};
    switch (mode) {
      case ScalingMode::kNone:
        break;
      case ScalingMode::kMinMax: {
        const double lo = block.minCoeff();
        const double hi = block.maxCoeff();
        s.shift = lo;
        s.scale = hi > lo ? hi - lo : 1.0;
        break;
      }
      case ScalingMode::kMeanStd: {
        const double mean = block.mean();
        const double var = (block.array() - mean).square().mean();
        s.shift = mean;
        s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
        break;
      }
    }
    blocks.push_back(s);
  }
  return ScalingTransform(mode, std::move(blocks));
}

SnapshotDataset apply_scaling(const SnapshotDataset& ds, const ScalingTransform& st) {
  std::optional<Matrix> deriv;
  if (ds.derivatives()) deriv = st.apply_rates(*ds.derivatives(), ds.layout());
  return SnapshotDataset(st.apply_states(ds.states(), ds.layout()), ds.grid(), ds.layout(),
                         std::move(deriv));
}

SnapshotDataset unapply_scaling(const SnapshotDataset& ds, const ScalingTransform& st) {
  std::optional<Matrix> deriv;
  if (ds.derivatives()) deriv = st.unapply_rates(*ds.derivatives(), ds.layout());
  return SnapshotDataset(st.unapply_states(ds.states(), ds.layout()), ds.grid(), ds.layout(),
                         std::move(deriv));
}

// ---- files ----

LayoutDescriptor load_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open layout file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_io("malformed layout JSON " + path.string() + ": " + e.what());
  }
  LayoutDescriptor desc;
  try {
    for (const auto& b : j.at("blocks")) {
      desc.blocks.emplace_back(b.at("name").get<std::string>(), b.at("rows").get<Eigen::Index>());
    }
    if (j.contains("derivatives")) {
      const auto& d = j["derivatives"];
      if (d.is_string()) {
        desc.derivatives = d.get<std::string>();
      } else if (d.is_boolean() && d.get<bool>()) {
        desc.derivatives = "";  // resolved to the sibling name by load_dataset
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail_validation("layout error in " + path.string() + ": " + e.what());
  }
  return desc;
}

void save_layout(const std::filesystem::path& path, const LayoutDescriptor& desc) {
  nlohmann::json j;
  j["blocks"] = nlohmann::json::array();
  for (const auto& [name, rows] : desc.blocks) j["blocks"].push_back({{"name", name}, {"rows", rows}});
  if (desc.derivatives) j["derivatives"] = *desc.derivatives;
  std::ofstream out(path);
  if (!out) fail_io("cannot write layout file " + path.string());
  out << j.dump(2) << '\n';
}

std::filesystem::path derivative_path_for(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_filename(csv_path.stem().string() + ".deriv.csv");
  return p;
}

LayoutDescriptor describe(const SnapshotDataset& ds, const std::filesystem::path& csv_path) {
  LayoutDescriptor desc;
  for (const auto& b : ds.layout().blocks()) desc.blocks.emplace_back(b.name, b.rows);
  if (ds.has_derivatives()) desc.derivatives = derivative_path_for(csv_path).filename().string();
  return desc;
}

namespace {

std::vector<std::string> state_header(const BlockLayout& layout) {
  std::vector<std::string> header{"t"};
  for (const auto& b : layout.blocks()) {
    for (Eigen::Index i = 0; i < b.rows; ++i) header.push_back(b.name + ":" + std::to_string(i));
  }
  return header;
}

// Reads a time-major snapshot CSV; returns (times, state matrix n x m).
std::pair<std::vector<double>, Matrix> read_snapshot_csv(const std::filesystem::path& path,
                                                         const BlockLayout& layout) {
  const CsvTable table = read_csv(path);
  const auto expected = state_header(layout);
  if (table.header.size() != expected.size()) {
    fail_validation("layout error: " + path.string() + " has " +
                    std::to_string(table.header.size() - 1) + " state columns, layout declares " +
                    std::to_string(expected.size() - 1));
  }
  for (std::size_t c = 0; c < expected.size(); ++c) {
    if (table.header[c] != expected[c]) {
      fail_validation("layout error: " + path.string() + " column " + std::to_string(c + 1) +
                      " is '" + table.header[c] + "', expected '" + expected[c] + "'");
    }
  }
  const auto m = static_cast<Eigen::Index>(table.rows.rows());
  std::vector<double> t(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) t[static_cast<std::size_t>(i)] = table.rows(i, 0);
  Matrix states = table.rows.rightCols(table.rows.cols() - 1).transpose();
  return {std::move(t), std::move(states)};
}

void write_snapshot_csv(const std::filesystem::path& path, const std::vector<double>& t,
                        const Matrix& values, const BlockLayout& layout) {
  Matrix rows(values.cols(), values.rows() + 1);
  for (Eigen::Index i = 0; i < values.cols(); ++i) rows(i, 0) = t[static_cast<std::size_t>(i)];
  rows.rightCols(values.rows()) = values.transpose();
  write_csv(path, state_header(layout), rows);
}

}  // namespace

SnapshotDataset load_dataset(const std::filesystem::path& csv_path, const LayoutDescriptor& desc) {
  const BlockLayout layout = desc.layout();
  auto [t, states] = read_snapshot_csv(csv_path, layout);
  std::optional<Matrix> deriv;
  if (desc.derivatives) {
    auto dpath = desc.derivatives->empty() ? derivative_path_for(csv_path)
                                           : csv_path.parent_path() / *desc.derivatives;
    auto [td, d] = read_snapshot_csv(dpath, layout);
    if (td != t) fail_validation("derivative file " + dpath.string() + " has a different time grid");
    deriv = std::move(d);
  }
  return SnapshotDataset(std::move(states), TimeGrid(std::move(t)), layout, std::move(deriv));
}

void save_dataset(const std::filesystem::path& csv_path, const SnapshotDataset& ds) {
  write_snapshot_csv(csv_path, ds.grid().instants(), ds.states(), ds.layout());
  if (ds.derivatives()) {
    write_snapshot_csv(derivative_path_for(csv_path), ds.grid().instants(), *ds.derivatives(),
                       ds.layout());
  }
}

}  // namespace opinf
