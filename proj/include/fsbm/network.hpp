#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fsbm/types.hpp"

namespace fsbm {

/// Symmetric 0/1 adjacency matrix with an empty diagonal. Stored as doubles so
/// products with responsibility matrices stay in Eigen's dense kernels.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  /// Validates symmetry, binary entries and the zero diagonal.
  explicit AdjacencyMatrix(Matrix entries);

  Index size() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }
  double operator()(Index i, Index j) const { return entries_(i, j); }
  /// Number of edges, i.e. sum over i<j of A_ij.
  double edge_count() const { return entries_.sum() / 2.0; }
  /// Neighbors of each node in increasing order.
  const std::vector<std::vector<Index>>& neighbors() const { return neighbors_; }

  AdjacencyMatrix subgraph(const std::vector<Index>& nodes) const;
  AdjacencyMatrix permuted(const std::vector<Index>& order) const;

 private:
  Matrix entries_;
  std::vector<std::vector<Index>> neighbors_;
};

/// Community assignment in {0, ..., K}; community 0 is the reference class.
class CommunityLabels {
 public:
  CommunityLabels() = default;
  CommunityLabels(std::vector<int> labels, int num_communities);

  Index size() const { return static_cast<Index>(labels_.size()); }
  /// K + 1.
  int num_communities() const { return num_communities_; }
  int operator[](Index i) const { return labels_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& values() const { return labels_; }
  std::vector<Index> class_sizes() const;

 private:
  std::vector<int> labels_;
  int num_communities_ = 0;
};

struct BlockMatrix {
  Matrix values;
  std::optional<double> rho;

  Index communities() const { return values.rows(); }
};

inline constexpr double kBlockClampLow = 1e-6;
inline constexpr double kBlockClampHigh = 1.0 - 1e-6;

/// Throws InputError unless B is square, symmetric and inside [0,1].
void validate_block_matrix(const BlockMatrix& B);

BlockMatrix clamp_block_matrix(BlockMatrix B);

/// Draws A_ij ~ Bernoulli(B[Z_i][Z_j]) for i<j and mirrors.
AdjacencyMatrix sample_sbm(const CommunityLabels& labels, const BlockMatrix& B,
                           std::uint64_t seed);

/// Contingency counts n_ab = #{i : a_i = a, b_i = b}.
Eigen::MatrixXi contingency(const CommunityLabels& a, const CommunityLabels& b);

/// Normalized mutual information with 0 log 0 := 0; equals 1 when both
/// labelings are single-class.
double nmi(const CommunityLabels& a, const CommunityLabels& b);

/// Label permutation sigma (indexed by estimated label) minimizing the number
/// of disagreements sigma(zhat_i) != z_i.
std::vector<int> best_alignment(const CommunityLabels& zhat, const CommunityLabels& z);

/// min over sigma of sum_i 1{sigma(zhat_i) != z_i}.
Index clustering_error(const CommunityLabels& zhat, const CommunityLabels& z);

/// Optimal assignment for a square cost matrix (minimization). Returns the
/// column assigned to each row.
std::vector<int> hungarian(const Matrix& cost);

}  // namespace fsbm
