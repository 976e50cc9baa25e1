#include "fsbm/sobolev.hpp"

#include <string>

namespace fsbm {

namespace {

constexpr double kXiRankTolerance = 1e-10;

void check_community(const SlopeCoefficients& coeffs, int k) {
  if (k < 0 || k > coeffs.communities()) {
    throw InputError("community index " + std::to_string(k) + " out of range");
  }
}

}  // namespace

const std::array<double, kMaxScaledBernoulli + 1>& scaled_bernoulli_numbers() {
  // b_n = B_n / n! satisfies sum_{k=0}^{n} b_k / (n+1-k)! = 0 for n >= 1.
  static const std::array<double, kMaxScaledBernoulli + 1> table = [] {
    std::array<double, kMaxScaledBernoulli + 2> inv_fact{};
    inv_fact[0] = 1.0;
    for (int r = 1; r <= kMaxScaledBernoulli + 1; ++r) inv_fact[r] = inv_fact[r - 1] / r;
    std::array<double, kMaxScaledBernoulli + 1> b{};
    b[0] = 1.0;
    for (int n = 1; n <= kMaxScaledBernoulli; ++n) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += b[k] * inv_fact[n + 1 - k];
      b[n] = -acc;
    }
    return b;
  }();
  return table;
}

Vector null_basis(int m, double t) {
  if (m < 1) throw InputError("penalty order must be at least 1");
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("null_basis: t outside [0,1]");
  Vector values(m);
  for (int j = 0; j < m; ++j) values(j) = scaled_bernoulli(j, t);
  return values;
}

Matrix kernel_matrix(int m, const Vector& a, const Vector& b) {
  Matrix k(a.size(), b.size());
  for (Index j = 0; j < b.size(); ++j) {
    for (Index i = 0; i < a.size(); ++i) k(i, j) = kernel_eval(m, a(i), b(j));
  }
  return k;
}

namespace {

Matrix null_basis_table(int m, const Vector& points) {
  Matrix table(m, points.size());
  for (Index g = 0; g < points.size(); ++g) table.col(g) = null_basis(m, points(g));
  return table;
}

}  // namespace

SobolevDesign build_design(const FunctionalSample& X, int m, const Vector& out_grid) {
  if (m < 1 || 2 * m > kMaxScaledBernoulli) {
    throw InputError("penalty order m must be in [1, " + std::to_string(kMaxScaledBernoulli / 2) +
                     "]");
  }
  validate_grid(X.grid());
  SobolevDesign design;
  design.m = m;
  design.grid = X.grid();
  design.weights = X.weights();
  design.out_grid = out_grid.size() > 0 ? out_grid : X.grid();
  for (Index g = 0; g < design.out_grid.size(); ++g) {
    if (!(design.out_grid(g) >= 0.0 && design.out_grid(g) <= 1.0)) {
      throw InputError("output grid must lie in [0,1]");
    }
  }

  design.weighted_x = X.values() * design.weights.asDiagonal();
  design.psi_grid = null_basis_table(m, design.grid);
  design.psi = design.weighted_x * design.psi_grid.transpose();

  const Matrix k_grid = kernel_matrix(m, design.grid, design.grid);
  design.kx_grid = design.weighted_x * k_grid;  // n x T
  design.xi = design.kx_grid * design.weighted_x.transpose();
  design.xi = (0.5 * (design.xi + design.xi.transpose())).eval();

  design.psi_eval = null_basis_table(m, design.out_grid);
  design.kx_eval = design.weighted_x * kernel_matrix(m, design.grid, design.out_grid);

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(design.xi);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition of the kernel Gram matrix failed");
  }
  const Vector& values = eig.eigenvalues();
  const double top = values.size() > 0 ? values.maxCoeff() : 0.0;
  std::vector<Index> keep;
  for (Index r = values.size() - 1; r >= 0; --r) {
    if (top > 0.0 && values(r) > kXiRankTolerance * top) keep.push_back(r);
  }
  design.xi_basis.resize(design.xi.rows(), static_cast<Index>(keep.size()));
  design.xi_values.resize(static_cast<Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    design.xi_basis.col(static_cast<Index>(r)) = eig.eigenvectors().col(keep[r]);
    design.xi_values(static_cast<Index>(r)) = values(keep[r]);
  }
  return design;
}

double beta_eval(const SlopeCoefficients& coeffs, const SobolevDesign& design, int k, Index g) {
  check_community(coeffs, k);
  if (g < 0 || g >= design.out_grid.size()) throw InputError("beta_eval: grid index out of range");
  if (k == 0) return 0.0;
  return coeffs.d.row(k - 1).dot(design.psi_eval.col(g)) +
         coeffs.c.row(k - 1).dot(design.kx_eval.col(g));
}

Vector beta_on_output_grid(const SlopeCoefficients& coeffs, const SobolevDesign& design, int k) {
  check_community(coeffs, k);
  if (k == 0) return Vector::Zero(design.out_grid.size());
  return design.psi_eval.transpose() * coeffs.d.row(k - 1).transpose() +
         design.kx_eval.transpose() * coeffs.c.row(k - 1).transpose();
}

Vector beta_on_covariate_grid(const SlopeCoefficients& coeffs, const SobolevDesign& design, int k) {
  check_community(coeffs, k);
  if (k == 0) return Vector::Zero(design.grid.size());
  return design.psi_grid.transpose() * coeffs.d.row(k - 1).transpose() +
         design.kx_grid.transpose() * coeffs.c.row(k - 1).transpose();
}

Matrix representer_features(const SobolevDesign& design, const Vector& points) {
  const Index m = design.m;
  const Index n = design.nodes();
  Matrix features(points.size(), m + n);
  features.leftCols(m) = null_basis_table(design.m, points).transpose();
  features.rightCols(n) = (design.weighted_x * kernel_matrix(design.m, design.grid, points)).transpose();
  return features;
}

Vector beta_at(const SlopeCoefficients& coeffs, const SobolevDesign& design, int k,
               const Vector& points) {
  check_community(coeffs, k);
  if (k == 0) return Vector::Zero(points.size());
  Vector eta(design.m + design.nodes());
  eta << coeffs.d.row(k - 1).transpose(), coeffs.c.row(k - 1).transpose();
  return representer_features(design, points) * eta;
}

double penalty(const SlopeCoefficients& coeffs, const SobolevDesign& design) {
  if (coeffs.c.cols() != design.nodes()) {
    throw InputError("penalty: coefficient and design dimensions differ");
  }
  double total = 0.0;
  for (Index k = 0; k < coeffs.c.rows(); ++k) {
    const Vector ck = coeffs.c.row(k).transpose();
    total += ck.dot(design.xi * ck);
  }
  return std::max(total, 0.0);
}

Matrix linear_predictors(const SlopeCoefficients& coeffs, const SobolevDesign& design) {
  if (coeffs.c.cols() != design.nodes() || coeffs.d.cols() != design.m) {
    throw InputError("linear_predictors: coefficient and design dimensions differ");
  }
  Matrix r = design.psi * coeffs.d.transpose() + design.xi * coeffs.c.transpose();
  r.rowwise() += coeffs.alpha.transpose();
  return r;
}

}  // namespace fsbm
