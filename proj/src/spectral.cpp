#include "fsbm/spectral.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace fsbm {

namespace {

constexpr double kZeroRow = 1e-12;
constexpr int kLloydIterations = 100;

struct Points {
  Matrix rows;                 // nonzero normalized rows
  std::vector<Index> index;    // original node of each row
  std::vector<Index> zero;     // nodes with an all-zero embedding row
};

Points nonzero_rows(const SpectralEmbedding& E) {
  Points p;
  const Index n = E.normalized.rows();
  for (Index i = 0; i < n; ++i) {
    if (E.normalized.row(i).squaredNorm() > 0.0) {
      p.index.push_back(i);
    } else {
      p.zero.push_back(i);
    }
  }
  p.rows.resize(static_cast<Index>(p.index.size()), E.normalized.cols());
  for (std::size_t r = 0; r < p.index.size(); ++r) p.rows.row(static_cast<Index>(r)) = E.normalized.row(p.index[r]);
  return p;
}

// Nearest center, ties to the lowest index.
std::vector<int> assign_nearest(const Matrix& points, const Matrix& centers, Vector* sqdist) {
  std::vector<int> labels(static_cast<std::size_t>(points.rows()));
  if (sqdist) sqdist->resize(points.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Index c = 0; c < centers.rows(); ++c) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    if (sqdist) (*sqdist)(i) = best;
  }
  return labels;
}

// Zero rows join the largest class, then labels are renumbered by first
// appearance so equal partitions give equal label vectors.
CommunityLabels finalize_labels(const Points& p, const std::vector<int>& point_labels, Index n,
                                int classes) {
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  std::vector<Index> sizes(static_cast<std::size_t>(classes), 0);
  for (std::size_t r = 0; r < p.index.size(); ++r) {
    labels[static_cast<std::size_t>(p.index[r])] = point_labels[r];
    ++sizes[static_cast<std::size_t>(point_labels[r])];
  }
  const int largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (const Index i : p.zero) labels[static_cast<std::size_t>(i)] = largest;

  std::vector<int> remap(static_cast<std::size_t>(classes), -1);
  int next = 0;
  for (int& v : labels) {
    if (remap[static_cast<std::size_t>(v)] < 0) remap[static_cast<std::size_t>(v)] = next++;
    v = remap[static_cast<std::size_t>(v)];
  }
  return CommunityLabels(std::move(labels), classes);
}

bool has_empty_class(const CommunityLabels& labels) {
  const auto sizes = labels.class_sizes();
  return std::any_of(sizes.begin(), sizes.end(), [](Index s) { return s == 0; });
}

}  // namespace

SpectralEmbedding embed(const AdjacencyMatrix& A, int K) {
  const Index n = A.size();
  const Index dim = K + 1;
  if (K < 0 || n < dim) {
    throw InputError("embed: need n >= K+1 nodes");
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(A.matrix());
  if (eig.info() != Eigen::Success) {
    throw NumericalError("adjacency eigendecomposition failed (n=" + std::to_string(n) + ")");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Vector& values = eig.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(values(a)) > std::abs(values(b));
  });

  SpectralEmbedding E;
  E.vectors.resize(n, dim);
  E.eigenvalues.resize(dim);
  for (Index c = 0; c < dim; ++c) {
    E.vectors.col(c) = eig.eigenvectors().col(order[static_cast<std::size_t>(c)]);
    E.eigenvalues(c) = values(order[static_cast<std::size_t>(c)]);
  }
  // Directions with a zero eigenvalue carry no graph information (the empty
  // graph is the extreme case); they are left out of the normalized rows.
  const double tol = 1e-12 * std::max(1.0, values.cwiseAbs().maxCoeff());
  E.normalized = E.vectors;
  for (Index c = 0; c < dim; ++c) {
    if (std::abs(E.eigenvalues(c)) <= tol) E.normalized.col(c).setZero();
  }
  for (Index i = 0; i < n; ++i) {
    const double norm = E.normalized.row(i).norm();
    if (norm > kZeroRow) {
      E.normalized.row(i) /= norm;
    } else {
      E.normalized.row(i).setZero();
    }
  }
  return E;
}

ClusterResult approx_kmeans(const SpectralEmbedding& E, int K, int restarts, std::uint64_t seed) {
  if (restarts < 1) throw InputError("approx_kmeans: restarts must be at least 1");
  const int classes = K + 1;
  const Index n = E.normalized.rows();
  const Points p = nonzero_rows(E);
  const Index npts = p.rows.rows();

  ClusterResult result;
  if (npts == 0) {
    result.labels = CommunityLabels(std::vector<int>(static_cast<std::size_t>(n), 0), classes);
    result.degenerate = classes > 1;
    return result;
  }

  std::vector<int> best_labels;
  double best_objective = std::numeric_limits<double>::infinity();
  for (int run = 0; run < restarts; ++run) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(run)));
    // k-means++ seeding
    Matrix centers(classes, p.rows.cols());
    Index first = static_cast<Index>(uniform01(rng) * double(npts));
    centers.row(0) = p.rows.row(std::min(first, npts - 1));
    Vector d2 = (p.rows.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < classes; ++c) {
      const double total = d2.sum();
      Index pick = 0;
      if (total > 0.0) {
        double target = uniform01(rng) * total;
        for (pick = 0; pick + 1 < npts; ++pick) {
          target -= d2(pick);
          if (target < 0.0) break;
        }
      } else {
        pick = std::min(static_cast<Index>(uniform01(rng) * double(npts)), npts - 1);
      }
      centers.row(c) = p.rows.row(pick);
      d2 = d2.cwiseMin((p.rows.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels;
    Vector sq;
    for (int it = 0; it < kLloydIterations; ++it) {
      std::vector<int> next = assign_nearest(p.rows, centers, &sq);
      if (next == labels) break;
      labels = std::move(next);
      Matrix sums = Matrix::Zero(classes, p.rows.cols());
      Eigen::VectorXi counts = Eigen::VectorXi::Zero(classes);
      for (Index i = 0; i < npts; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += p.rows.row(i);
        ++counts(labels[static_cast<std::size_t>(i)]);
      }
      for (int c = 0; c < classes; ++c) {
        if (counts(c) > 0) centers.row(c) = sums.row(c) / double(counts(c));
      }
    }
    labels = assign_nearest(p.rows, centers, &sq);
    const double objective = sq.sum();
    if (objective < best_objective) {
      best_objective = objective;
      best_labels = std::move(labels);
    }
  }
  result.labels = finalize_labels(p, best_labels, n, classes);
  result.objective = best_objective;
  result.degenerate = has_empty_class(result.labels);
  return result;
}

ClusterResult kcenter_cluster(const SpectralEmbedding& E, int K) {
  const int classes = K + 1;
  const Index n = E.normalized.rows();
  if (n < classes) throw InputError("kcenter_cluster: need n >= K+1 nodes");
  const Points p = nonzero_rows(E);
  const Index npts = p.rows.rows();

  ClusterResult result;
  if (npts == 0) {
    result.labels = CommunityLabels(std::vector<int>(static_cast<std::size_t>(n), 0), classes);
    result.degenerate = classes > 1;
    return result;
  }

  // First center: the point closest to the centroid (ties to lowest index).
  const Eigen::RowVectorXd centroid = p.rows.colwise().mean();
  Index first = 0;
  ((p.rows.rowwise() - centroid).rowwise().squaredNorm()).minCoeff(&first);

  Matrix centers(classes, p.rows.cols());
  centers.row(0) = p.rows.row(first);
  Vector d2 = (p.rows.rowwise() - centers.row(0)).rowwise().squaredNorm();
  int placed = 1;
  bool degenerate = false;
  for (; placed < classes; ++placed) {
    Index far = 0;
    const double dist = d2.maxCoeff(&far);
    if (!(dist > 0.0)) {
      degenerate = true;
      break;
    }
    centers.row(placed) = p.rows.row(far);
    d2 = d2.cwiseMin((p.rows.rowwise() - centers.row(placed)).rowwise().squaredNorm());
  }
  Vector sq;
  const std::vector<int> labels = assign_nearest(p.rows, centers.topRows(placed), &sq);
  result.labels = finalize_labels(p, labels, n, classes);
  result.objective = std::sqrt(sq.maxCoeff());
  result.degenerate = degenerate || has_empty_class(result.labels);
  return result;
}

Matrix initial_responsibilities(const CommunityLabels& labels, double smoothing) {
  const int classes = labels.num_communities();
  const int K = classes - 1;
  if (!(smoothing >= 0.0 && smoothing * classes < 1.0)) {
    throw InputError("smoothing must lie in [0, 1/(K+1))");
  }
  Matrix q = Matrix::Constant(labels.size(), classes, smoothing);
  for (Index i = 0; i < labels.size(); ++i) q(i, labels[i]) = 1.0 - K * smoothing;
  return q;
}

}  // namespace fsbm
