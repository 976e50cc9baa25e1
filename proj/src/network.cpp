#include "fsbm/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace fsbm {

AdjacencyMatrix::AdjacencyMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols()) {
    throw InputError("adjacency matrix must be square");
  }
  const Index n = entries_.rows();
  for (Index j = 0; j < n; ++j) {
    if (entries_(j, j) != 0.0) {
      throw InputError("adjacency matrix has a self-loop at node " + std::to_string(j));
    }
    for (Index i = 0; i < n; ++i) {
      const double v = entries_(i, j);
      if (v != 0.0 && v != 1.0) {
        throw InputError("adjacency entries must be 0 or 1");
      }
      if (v != entries_(j, i)) {
        throw InputError("adjacency matrix is not symmetric at (" + std::to_string(i) + "," +
                         std::to_string(j) + ")");
      }
    }
  }
  neighbors_.resize(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (entries_(i, j) != 0.0) neighbors_[static_cast<std::size_t>(j)].push_back(i);
    }
  }
}

AdjacencyMatrix AdjacencyMatrix::subgraph(const std::vector<Index>& nodes) const {
  const Index m = static_cast<Index>(nodes.size());
  Matrix sub(m, m);
  for (Index b = 0; b < m; ++b) {
    for (Index a = 0; a < m; ++a) {
      sub(a, b) = entries_(nodes[a], nodes[b]);
    }
  }
  return AdjacencyMatrix(std::move(sub));
}

AdjacencyMatrix AdjacencyMatrix::permuted(const std::vector<Index>& order) const {
  return subgraph(order);
}

CommunityLabels::CommunityLabels(std::vector<int> labels, int num_communities)
    : labels_(std::move(labels)), num_communities_(num_communities) {
  if (num_communities_ < 1) {
    throw InputError("number of communities must be positive");
  }
  for (const int v : labels_) {
    if (v < 0 || v >= num_communities_) {
      throw InputError("label " + std::to_string(v) + " outside {0,...," +
                       std::to_string(num_communities_ - 1) + "}");
    }
  }
}

std::vector<Index> CommunityLabels::class_sizes() const {
  std::vector<Index> sizes(static_cast<std::size_t>(num_communities_), 0);
  for (const int v : labels_) ++sizes[static_cast<std::size_t>(v)];
  return sizes;
}

void validate_block_matrix(const BlockMatrix& B) {
  const Matrix& v = B.values;
  if (v.rows() != v.cols() || v.rows() == 0) {
    throw InputError("block matrix must be square and nonempty");
  }
  for (Index j = 0; j < v.cols(); ++j) {
    for (Index i = 0; i < v.rows(); ++i) {
      if (!(v(i, j) >= 0.0 && v(i, j) <= 1.0)) {
        throw InputError("block probabilities must lie in [0,1]");
      }
      if (std::abs(v(i, j) - v(j, i)) > 1e-12) {
        throw InputError("block matrix must be symmetric");
      }
    }
  }
}

BlockMatrix clamp_block_matrix(BlockMatrix B) {
  B.values = B.values.cwiseMax(kBlockClampLow).cwiseMin(kBlockClampHigh);
  return B;
}

AdjacencyMatrix sample_sbm(const CommunityLabels& labels, const BlockMatrix& B,
                           std::uint64_t seed) {
  validate_block_matrix(B);
  if (labels.num_communities() != B.communities()) {
    throw InputError("labels and block matrix disagree on the number of communities");
  }
  const Index n = labels.size();
  std::mt19937_64 rng(mix_seed(seed));
  Matrix a = Matrix::Zero(n, n);
  for (Index j = 1; j < n; ++j) {
    for (Index i = 0; i < j; ++i) {
      const double p = B.values(labels[i], labels[j]);
      if (uniform01(rng) < p) {
        a(i, j) = 1.0;
        a(j, i) = 1.0;
      }
    }
  }
  return AdjacencyMatrix(std::move(a));
}

Eigen::MatrixXi contingency(const CommunityLabels& a, const CommunityLabels& b) {
  if (a.size() != b.size()) {
    throw InputError("label vectors differ in length");
  }
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(a.num_communities(), b.num_communities());
  for (Index i = 0; i < a.size(); ++i) ++counts(a[i], b[i]);
  return counts;
}

double nmi(const CommunityLabels& a, const CommunityLabels& b) {
  const Eigen::MatrixXi counts = contingency(a, b);
  const double n = static_cast<double>(a.size());
  if (a.size() == 0) return 1.0;
  const Eigen::VectorXi rows = counts.rowwise().sum();
  const Eigen::VectorXi cols = counts.colwise().sum().transpose();

  double numerator = 0.0;
  for (Index j = 0; j < counts.cols(); ++j) {
    for (Index i = 0; i < counts.rows(); ++i) {
      const double nij = counts(i, j);
      if (nij > 0) numerator += nij * std::log(nij * n / (double(rows(i)) * double(cols(j))));
    }
  }
  double denominator = 0.0;
  for (Index i = 0; i < rows.size(); ++i) {
    if (rows(i) > 0) denominator += rows(i) * std::log(rows(i) / n);
  }
  for (Index j = 0; j < cols.size(); ++j) {
    if (cols(j) > 0) denominator += cols(j) * std::log(cols(j) / n);
  }
  if (denominator == 0.0) {
    // Both labelings single-class (the only way both entropies vanish).
    return 1.0;
  }
  const double value = -2.0 * numerator / denominator;
  return std::clamp(value, 0.0, 1.0);
}

std::vector<int> hungarian(const Matrix& cost) {
  // Shortest augmenting path formulation with row/column potentials.
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw InputError("hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

std::vector<int> best_alignment(const CommunityLabels& zhat, const CommunityLabels& z) {
  if (zhat.size() != z.size()) {
    throw InputError("label vectors differ in length");
  }
  const int classes = std::max(zhat.num_communities(), z.num_communities());
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(classes, classes);
  for (Index i = 0; i < z.size(); ++i) ++counts(zhat[i], z[i]);

  std::vector<int> perm(static_cast<std::size_t>(classes));
  std::iota(perm.begin(), perm.end(), 0);
  if (classes <= 8) {
    // Lexicographic enumeration; the first permutation reaching the best
    // agreement wins ties.
    std::vector<int> best = perm;
    long best_agree = -1;
    do {
      long agree = 0;
      for (int a = 0; a < classes; ++a) agree += counts(a, perm[static_cast<std::size_t>(a)]);
      if (agree > best_agree) {
        best_agree = agree;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  Matrix cost = -counts.cast<double>();
  return hungarian(cost);
}

Index clustering_error(const CommunityLabels& zhat, const CommunityLabels& z) {
  const std::vector<int> sigma = best_alignment(zhat, z);
  Index errors = 0;
  for (Index i = 0; i < z.size(); ++i) {
    if (sigma[static_cast<std::size_t>(zhat[i])] != z[i]) ++errors;
  }
  return errors;
}

}  // namespace fsbm
