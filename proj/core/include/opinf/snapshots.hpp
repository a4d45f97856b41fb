#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "opinf/types.hpp"

namespace opinf {

/// Strictly increasing sequence of sampling instants (at least two).
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> instants);

  static TimeGrid uniform(double t0, double t1, std::size_t count);

  [[nodiscard]] const std::vector<double>& instants() const noexcept { return instants_; }
  [[nodiscard]] std::size_t size() const noexcept { return instants_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return instants_[i]; }
  [[nodiscard]] double front() const { return instants_.front(); }
  [[nodiscard]] double back() const { return instants_.back(); }
  [[nodiscard]] double min_spacing() const;

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> instants_;
};

/// A named, contiguous range of state rows (one physical variable).
struct Block {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;

  bool operator==(const Block&) const = default;
};

/// Ordered partition of the state rows into variables.
class BlockLayout {
 public:
  BlockLayout() = default;
  /// Builds contiguous blocks from (name, row count) pairs in order.
  static BlockLayout from_sizes(const std::vector<std::pair<std::string, Eigen::Index>>& sizes);
  static BlockLayout single(const std::string& name, Eigen::Index rows);

  [[nodiscard]] const std::vector<Block>& blocks() const noexcept { return blocks_; }
  [[nodiscard]] std::size_t size() const noexcept { return blocks_.size(); }
  [[nodiscard]] Eigen::Index total_rows() const;
  [[nodiscard]] const Block& at(const std::string& name) const;

  /// Throws unless the blocks are disjoint, contiguous, and cover rows [0, n).
  void validate(Eigen::Index n) const;

  bool operator==(const BlockLayout&) const = default;

 private:
  std::vector<Block> blocks_;
};

/// Snapshot matrix (one column per time instant) with optional derivative data.
class SnapshotDataset {
 public:
  SnapshotDataset(Matrix states, TimeGrid grid, BlockLayout layout,
                  std::optional<Matrix> derivatives = std::nullopt);

  [[nodiscard]] const Matrix& states() const noexcept { return states_; }
  [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
  [[nodiscard]] const BlockLayout& layout() const noexcept { return layout_; }
  [[nodiscard]] const std::optional<Matrix>& derivatives() const noexcept { return derivatives_; }
  [[nodiscard]] bool has_derivatives() const noexcept { return derivatives_.has_value(); }
  [[nodiscard]] Eigen::Index dimension() const noexcept { return states_.rows(); }
  [[nodiscard]] Eigen::Index snapshot_count() const noexcept { return states_.cols(); }

  [[nodiscard]] SnapshotDataset with_derivatives(Matrix derivatives) const;
  [[nodiscard]] SnapshotDataset without_derivatives() const;

 private:
  Matrix states_;
  TimeGrid grid_;
  BlockLayout layout_;
  std::optional<Matrix> derivatives_;
};

enum class DerivativeScheme {
  kCentral2,   // central interior, first-order one-sided endpoints
  kForward1,   // forward differences, backward at the last point
  kBackward1,  // backward differences, forward at the first point
  kAuto,       // central interior, second-order one-sided endpoints
};

DerivativeScheme parse_derivative_scheme(const std::string& name);

/// Finite-difference time derivatives of the states. Refuses to replace
/// derivatives already stored in `ds` unless `overwrite` is set.
SnapshotDataset estimate_derivatives(const SnapshotDataset& ds, DerivativeScheme scheme,
                                     bool overwrite = false);

enum class ScalingMode { kNone, kMinMax, kMeanStd };

ScalingMode parse_scaling_mode(const std::string& name);
std::string to_string(ScalingMode mode);

struct BlockScaling {
  std::string name;
  double shift = 0.0;
  double scale = 1.0;

  bool operator==(const BlockScaling&) const = default;
};

/// Per-block affine map x -> (x - shift) / scale.
class ScalingTransform {
 public:
  ScalingTransform() = default;
  ScalingTransform(ScalingMode mode, std::vector<BlockScaling> blocks);

  static ScalingTransform identity(const BlockLayout& layout);

  [[nodiscard]] ScalingMode mode() const noexcept { return mode_; }
  [[nodiscard]] const std::vector<BlockScaling>& blocks() const noexcept { return blocks_; }

  /// Transforms state columns laid out per `layout`.
  [[nodiscard]] Matrix apply_states(const Matrix& x, const BlockLayout& layout) const;
  [[nodiscard]] Matrix unapply_states(const Matrix& x, const BlockLayout& layout) const;
  /// Derivatives only see the scale; the shift drops out of d/dt.
  [[nodiscard]] Matrix apply_rates(const Matrix& dx, const BlockLayout& layout) const;
  [[nodiscard]] Matrix unapply_rates(const Matrix& dx, const BlockLayout& layout) const;

  bool operator==(const ScalingTransform&) const = default;

 private:
  void check_layout(const BlockLayout& layout) const;

  ScalingMode mode_ = ScalingMode::kNone;
  std::vector<BlockScaling> blocks_;
};

ScalingTransform fit_scaling(const SnapshotDataset& ds, ScalingMode mode);
SnapshotDataset apply_scaling(const SnapshotDataset& ds, const ScalingTransform& st);
SnapshotDataset unapply_scaling(const SnapshotDataset& ds, const ScalingTransform& st);

// ---- files ----

/// Contents of the layout descriptor JSON.
struct LayoutDescriptor {
  std::vector<std::pair<std::string, Eigen::Index>> blocks;
  /// Derivative file name relative to the snapshot file's directory, when declared.
  std::optional<std::string> derivatives;

  [[nodiscard]] BlockLayout layout() const { return BlockLayout::from_sizes(blocks); }
};

LayoutDescriptor load_layout(const std::filesystem::path& path);
void save_layout(const std::filesystem::path& path, const LayoutDescriptor& desc);
LayoutDescriptor describe(const SnapshotDataset& ds, const std::filesystem::path& csv_path);

/// `<stem>.deriv.csv` next to `csv_path`.
std::filesystem::path derivative_path_for(const std::filesystem::path& csv_path);

SnapshotDataset load_dataset(const std::filesystem::path& csv_path, const LayoutDescriptor& layout);
/// Writes the snapshot CSV, plus the derivative sibling when present.
void save_dataset(const std::filesystem::path& csv_path, const SnapshotDataset& ds);

}  // namespace opinf
