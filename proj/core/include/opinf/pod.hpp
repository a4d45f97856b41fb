#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "opinf/operators.hpp"
#include "opinf/snapshots.hpp"
#include "opinf/types.hpp"

namespace opinf {

/// How many POD modes to keep: a fixed count (global or per block) or the
/// smallest count whose cumulative squared-singular-value energy reaches theta.
struct RankRule {
  enum class Kind { kFixed, kEnergy };

  Kind kind = Kind::kEnergy;
  double theta = 0.999;
  std::size_t rank = 0;                               // fixed, applied to every basis block
  std::map<std::string, std::size_t> block_ranks;     // fixed, per named block (overrides rank)

  static RankRule energy(double theta);
  static RankRule fixed(std::size_t rank);
  static RankRule fixed(std::map<std::string, std::size_t> block_ranks);

  void validate() const;
};

struct BasisOptions {
  RankRule rule;
  bool blockwise = true;
  /// Compute the SVD of the mean-subtracted snapshots. Projection still uses V^T x.
  bool center = false;
};

/// Cumulative energy sum_{i<=r} s_i^2 / sum_i s_i^2 for r = 1..len(s).
std::vector<double> cumulative_energy(const Vector& singular_values);

/// Smallest r with cumulative energy >= theta.
std::size_t rank_for_energy(const Vector& singular_values, double theta);

/// One diagonal block of a POD basis: the modes spanning the rows of one state block
/// (or all rows, for a global basis).
struct BasisBlock {
  std::string name;
  Eigen::Index row_offset = 0;
  Eigen::Index row_count = 0;
  Eigen::Index col_offset = 0;
  std::size_t rank = 0;
  Vector singular_values;  // full spectrum of this block's snapshot matrix
};

class PodBasis {
 public:
  PodBasis(Matrix v, std::vector<BasisBlock> blocks, BlockLayout state_layout);

  [[nodiscard]] const Matrix& V() const noexcept { return v_; }
  [[nodiscard]] Eigen::Index full_dimension() const noexcept { return v_.rows(); }
  [[nodiscard]] Eigen::Index rank() const noexcept { return v_.cols(); }
  [[nodiscard]] const std::vector<BasisBlock>& blocks() const noexcept { return blocks_; }
  [[nodiscard]] bool blockwise() const noexcept;
  [[nodiscard]] const BlockLayout& state_layout() const noexcept { return state_layout_; }
  /// Layout of reduced coordinates: one block per basis block, sized by its rank.
  [[nodiscard]] BlockLayout reduced_layout() const;
  /// Energy captured per basis block at the chosen rank.
  [[nodiscard]] std::map<std::string, double> captured_energy() const;

  /// ||V^T V - I||_max
  [[nodiscard]] double orthonormality_defect() const;

 private:
  Matrix v_;
  std::vector<BasisBlock> blocks_;
  BlockLayout state_layout_;
};

PodBasis compute_basis(const SnapshotDataset& ds, const BasisOptions& options);

/// ||X - V V^T X||_F / ||X||_F
double projection_error(const SnapshotDataset& ds, const PodBasis& basis);

/// States and derivatives mapped by V^T.
SnapshotDataset project(const SnapshotDataset& ds, const PodBasis& basis);
/// Reduced states and derivatives mapped by V, in the basis' full state layout.
SnapshotDataset lift(const SnapshotDataset& reduced, const PodBasis& basis);

/// Intrusive projection: V^T A V, V^T H (V ⊗ V), V^T C, with the quadratic part symmetrized.
QuadraticOperators galerkin_rom(const QuadraticOperators& full, const Matrix& v);

/// Writes V as `<stem>.csv` and the sidecar JSON as `<stem>.json`.
void save_basis(const std::filesystem::path& stem, const PodBasis& basis,
                const ScalingTransform& scaling);
std::pair<PodBasis, ScalingTransform> load_basis(const std::filesystem::path& stem);

}  // namespace opinf
