#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "fsbm/spectral.hpp"
#include "fsbm/variational.hpp"

namespace fsbm {

namespace {

// Held-out log-likelihood of every grid value for one fold; NaN marks a
// skipped fold.
std::vector<double> fold_logliks(const AdjacencyMatrix& A, const FunctionalSample& X, int K,
                                 const std::vector<double>& grid, int m, const CvOptions& options,
                                 const std::vector<Index>& train, const std::vector<Index>& test,
                                 std::uint64_t fold_seed) {
  const double skipped = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> out(grid.size(), skipped);
  const Index n = A.size();
  const int classes = K + 1;
  if (static_cast<Index>(train.size()) < classes || test.empty()) return out;

  const AdjacencyMatrix a_train = A.subgraph(train);
  const FunctionalSample x_train = X.subset(train);
  const ClusterResult init = approx_kmeans(embed(a_train, K), K, options.kmeans_restarts, fold_seed);
  if (init.degenerate) return out;
  const Matrix q0 = initial_responsibilities(init.labels, options.smoothing);
  const SobolevDesign design = build_design(x_train, m);

  for (std::size_t g = 0; g < grid.size(); ++g) {
    const FitResult result = fit(a_train, design, K, grid[g], q0, options.fit);
    const auto sizes = result.labels.class_sizes();
    if (std::any_of(sizes.begin(), sizes.end(), [](Index s) { return s == 0; })) continue;

    // Predictors for every node from the fitted slope on the covariate grid.
    const SlopeCoefficients& coeffs = result.state.coeffs;
    Matrix predictors(n, K);
    for (int k = 1; k <= K; ++k) {
      const Vector beta = beta_on_covariate_grid(coeffs, design, k);
      predictors.col(k - 1) =
          (X.values() * X.weights().cwiseProduct(beta)).array() + coeffs.alpha(k - 1);
    }
    const Matrix weights = membership_weights(predictors);

    VariationalState state;
    state.B = result.state.B;
    state.coeffs = coeffs;
    state.lambda = grid[g];
    state.q = weights;
    for (std::size_t r = 0; r < train.size(); ++r) {
      state.q.row(train[r]) = result.state.q.row(static_cast<Index>(r));
    }
    const Matrix q = update_q(state, A, predictors, options.fit, &test);
    const CommunityLabels z = argmax_labels(q);

    std::vector<char> is_test(static_cast<std::size_t>(n), 0);
    for (const Index i : test) is_test[static_cast<std::size_t>(i)] = 1;
    const BlockMatrix B = clamp_block_matrix(state.B);
    double ll = 0.0;
    for (const Index i : test) ll += std::log(weights(i, z[i]));
    for (Index j = 1; j < n; ++j) {
      for (Index i = 0; i < j; ++i) {
        if (!is_test[static_cast<std::size_t>(i)] && !is_test[static_cast<std::size_t>(j)]) continue;
        const double p = B.values(z[i], z[j]);
        ll += A(i, j) != 0.0 ? std::log(p) : std::log1p(-p);
      }
    }
    out[g] = ll;
  }
  return out;
}

}  // namespace

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int e = -6; e <= -1; ++e) {
    grid.push_back(std::pow(10.0, e));
    if (e < -1) grid.push_back(std::pow(10.0, e + 0.5));
  }
  return grid;
}

LambdaPath cross_validate_lambda(const AdjacencyMatrix& A, const FunctionalSample& X, int K,
                                 const std::vector<double>& grid, int m,
                                 const CvOptions& options) {
  if (options.folds < 2) throw InputError("cross-validation needs at least two folds");
  if (grid.empty()) throw InputError("lambda grid is empty");
  if (X.size() != A.size()) throw InputError("covariates and adjacency disagree in size");
  for (const double v : grid) {
    if (!(v >= 0.0)) throw InputError("lambda values must be nonnegative");
  }

  LambdaPath path;
  path.folds = options.folds;
  if (grid.size() == 1) {
    path.chosen = grid.front();
    path.records.push_back({grid.front(), 0.0, 0.0, 0});
    return path;
  }

  // Fisher-Yates with a portable uniform draw, so folds agree across platforms.
  const Index n = A.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(options.seed, 0));
  for (Index i = n - 1; i > 0; --i) {
    const Index j = std::min(static_cast<Index>(uniform01(rng) * double(i + 1)), i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = static_cast<int>(r % options.folds);

  std::vector<std::vector<double>> results(static_cast<std::size_t>(options.folds));
  auto run_fold = [&](int f) {
    std::vector<Index> train, test;
    for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    results[static_cast<std::size_t>(f)] =
        fold_logliks(A, X, K, grid, m, options, train, test, derive_seed(options.seed, 1 + f));
  };
  const int workers = std::clamp(options.threads, 1, options.folds);
  if (workers == 1) {
    for (int f = 0; f < options.folds; ++f) run_fold(f);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int f = w; f < options.folds; f += workers) run_fold(f);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (const auto& r : results) {
    if (std::all_of(r.begin(), r.end(), [](double v) { return std::isnan(v); })) ++path.skipped_folds;
  }

  int best = -1;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CvRecord rec;
    rec.lambda = grid[g];
    std::vector<double> values;
    for (const auto& r : results) {
      if (!std::isnan(r[g])) values.push_back(r[g]);
    }
    rec.folds_used = static_cast<int>(values.size());
    if (!values.empty()) {
      const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
      double ss = 0.0;
      for (const double v : values) ss += (v - mean) * (v - mean);
      rec.mean_loglik = mean;
      rec.std_error = values.size() > 1 ? std::sqrt(ss / (values.size() - 1) / values.size()) : 0.0;
      if (best < 0 || mean > path.records[static_cast<std::size_t>(best)].mean_loglik) {
        best = static_cast<int>(g);
      }
    }
    path.records.push_back(rec);
  }

  if (best < 0) {
    path.chosen = options.fallback_lambda;
    return path;
  }
  const CvRecord& top = path.records[static_cast<std::size_t>(best)];
  const double threshold = top.mean_loglik - top.std_error;
  path.chosen = top.lambda;
  for (const CvRecord& rec : path.records) {
    if (rec.folds_used > 0 && rec.mean_loglik >= threshold && rec.lambda > path.chosen) {
      path.chosen = rec.lambda;
    }
  }
  return path;
}

}  // namespace fsbm
