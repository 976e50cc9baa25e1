#pragma once

#include <cstdint>

#include "fsbm/network.hpp"
#include "fsbm/types.hpp"

namespace fsbm {

/// Leading K+1 adjacency eigenvectors and their row-normalized copy.
struct SpectralEmbedding {
  Matrix vectors;     // n x (K+1), orthonormal columns
  Matrix normalized;  // rows scaled to unit norm; zero rows stay zero
  Vector eigenvalues; // the K+1 selected eigenvalues, by decreasing magnitude
};

/// Eigenvectors for the K+1 eigenvalues of largest magnitude.
SpectralEmbedding embed(const AdjacencyMatrix& A, int K);

struct ClusterResult {
  CommunityLabels labels;
  double objective = 0.0;   // k-means: sum of squared distances; k-center: max radius
  bool degenerate = false;  // fewer than K+1 distinct rows
};

/// Best of `restarts` k-means++ seeded Lloyd runs on the normalized rows.
ClusterResult approx_kmeans(const SpectralEmbedding& E, int K, int restarts, std::uint64_t seed);

/// Farthest-first traversal centers (2-approximation of min-max radius) and
/// nearest-center assignment, ties to the lowest center index.
ClusterResult kcenter_cluster(const SpectralEmbedding& E, int K);

/// Hard labels softened to responsibilities: 1 - K*smoothing on the label,
/// smoothing elsewhere.
Matrix initial_responsibilities(const CommunityLabels& labels, double smoothing);

}  // namespace fsbm
