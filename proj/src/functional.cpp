#include "fsbm/functional.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace fsbm {

namespace {

constexpr std::uint64_t kCovariateStream = 1;
constexpr std::uint64_t kLabelStream = 2;
constexpr std::uint64_t kEdgeStream = 3;

}  // namespace

void validate_grid(const Vector& grid) {
  if (grid.size() < 2) {
    throw InputError("grid needs at least two points");
  }
  for (Index l = 0; l < grid.size(); ++l) {
    if (!std::isfinite(grid(l)) || grid(l) < 0.0 || grid(l) > 1.0) {
      throw InputError("grid point " + std::to_string(l) + " outside [0,1]");
    }
    if (l > 0 && !(grid(l) > grid(l - 1))) {
      throw InputError("grid must be strictly increasing (point " + std::to_string(l) + ")");
    }
  }
}

FunctionalSample::FunctionalSample(Vector grid, Matrix values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  validate_grid(grid_);
  if (values_.cols() != grid_.size()) {
    throw InputError("every curve must have one value per grid point");
  }
  if (!values_.allFinite()) {
    throw InputError("curve values must be finite");
  }
  weights_ = trapezoid_weights(grid_);
}

FunctionalSample FunctionalSample::subset(const std::vector<Index>& nodes) const {
  Matrix sub(static_cast<Index>(nodes.size()), grid_.size());
  for (std::size_t r = 0; r < nodes.size(); ++r) sub.row(static_cast<Index>(r)) = values_.row(nodes[r]);
  return FunctionalSample(grid_, std::move(sub));
}

FunctionalSample FunctionalSample::centered() const {
  const Eigen::RowVectorXd mean = values_.colwise().mean();
  return FunctionalSample(grid_, values_.rowwise() - mean);
}

double inner_product(const Vector& grid, const Vector& x, const Vector& f) {
  if (x.size() != grid.size() || f.size() != grid.size()) {
    throw InputError("inner_product: curves are not on the same grid");
  }
  const Vector w = trapezoid_weights(grid);
  return (w.array() * x.array() * f.array()).sum();
}

Vector inner_products(const FunctionalSample& X, const Vector& f) {
  if (f.size() != X.grid_size()) {
    throw InputError("inner_products: function is not on the covariate grid");
  }
  return X.values() * X.weights().cwiseProduct(f);
}

double expansion_score(int j) {
  const double sign = (j % 2 == 1) ? 1.0 : -1.0;
  return sign / (double(j) * double(j));
}

double expansion_basis(int j, double t) {
  if (j == 1) return 1.0;
  return std::numbers::sqrt2 * std::cos(double(j - 1) * std::numbers::pi * t);
}

double quadratic_slope(double t, double tau) {
  return tau * (50.0 * (t - 0.5) * (t - 0.5) - 5.0);
}

BlockMatrix default_block(Index n) {
  const double rho = std::pow(std::log(double(n)), 1.5) / double(n);
  BlockMatrix B;
  B.values.resize(2, 2);
  B.values << 1.2, 0.3, 0.3, 1.2;
  B.values *= rho;
  B.rho = rho;
  return B;
}

FunctionalSample simulate_covariates(const GenerationConfig& cfg) {
  if (cfg.n < 2 || cfg.grid_size < 2) {
    throw InputError("simulate_covariates: need n >= 2 and grid_size >= 2");
  }
  constexpr int kTerms = 5;
  const Vector grid = uniform_grid<double>(cfg.grid_size);
  Matrix basis(kTerms, grid.size());
  for (int j = 1; j <= kTerms; ++j) {
    for (Index l = 0; l < grid.size(); ++l) {
      basis(j - 1, l) = expansion_score(j) * expansion_basis(j, grid(l));
    }
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, kCovariateStream));
  const double half_width = std::sqrt(3.0);
  Matrix scores(cfg.n, kTerms);
  for (Index i = 0; i < cfg.n; ++i) {
    for (int j = 0; j < kTerms; ++j) scores(i, j) = half_width * (2.0 * uniform01(rng) - 1.0);
  }
  FunctionalSample X(grid, scores * basis);
  return cfg.center ? X.centered() : X;
}

Vector membership_probabilities(const FunctionalSample& X, double alpha0, const Vector& beta0) {
  const Vector eta = (inner_products(X, beta0).array() + alpha0).matrix();
  return eta.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

CommunityLabels assign_labels(const FunctionalSample& X, double alpha0, const Vector& beta0,
                              std::uint64_t seed) {
  const Vector p = membership_probabilities(X, alpha0, beta0);
  std::mt19937_64 rng(mix_seed(seed));
  std::vector<int> z(static_cast<std::size_t>(X.size()));
  for (Index i = 0; i < X.size(); ++i) z[static_cast<std::size_t>(i)] = uniform01(rng) < p(i) ? 1 : 0;
  return CommunityLabels(std::move(z), 2);
}

SimulatedData simulate_dataset(const GenerationConfig& cfg) {
  SimulatedData out;
  out.X = simulate_covariates(cfg);
  out.alpha0 = cfg.alpha0;
  out.beta0 = out.X.grid().unaryExpr(cfg.beta0);
  out.block = cfg.block.values.size() > 0 ? cfg.block : default_block(cfg.n);
  out.labels = assign_labels(out.X, cfg.alpha0, out.beta0, derive_seed(cfg.seed, kLabelStream));
  out.A = sample_sbm(out.labels, out.block, derive_seed(cfg.seed, kEdgeStream));
  return out;
}

}  // namespace fsbm
