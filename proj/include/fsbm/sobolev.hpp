#pragma once

#include <array>
#include <cmath>

#include "fsbm/functional.hpp"
#include "fsbm/types.hpp"

namespace fsbm {

inline constexpr int kMaxScaledBernoulli = 24;

/// Bernoulli numbers B_0..B_kMaxScaledBernoulli (B_1 = -1/2), divided by i!.
const std::array<double, kMaxScaledBernoulli + 1>& scaled_bernoulli_numbers();

/// k_j(t) = B_j(t) / j!, the scaled Bernoulli polynomial.
template <typename S>
S scaled_bernoulli(int j, S t) {
  if (j < 0 || j > kMaxScaledBernoulli) {
    throw InputError("scaled Bernoulli polynomial order out of range");
  }
  // k_j(t) = sum_{i=0}^{j} (B_i / i!) t^{j-i} / (j-i)!
  const auto& b = scaled_bernoulli_numbers();
  std::array<S, kMaxScaledBernoulli + 1> inv_factorial{};
  inv_factorial[0] = S(1);
  for (int r = 1; r <= j; ++r) inv_factorial[r] = inv_factorial[r - 1] / S(r);
  S value(0);
  S power(1);
  for (int i = j; i >= 0; --i) {
    value += S(b[i]) * power * inv_factorial[j - i];
    power *= t;
  }
  return value;
}

/// Penalty order m: J(f) = int_0^1 |f^{(m)}|^2.
struct SobolevKernel {
  int m = 2;
};

/// Null-space basis psi_j = k_{j-1}, j = 1..m, at t in [0,1].
Vector null_basis(int m, double t);

/// Reproducing kernel of the penalized complement:
/// K_1(s,t) = k_m(s) k_m(t) + (-1)^{m-1} k_{2m}(frac(s - t)).
template <typename S>
S kernel_eval(int m, S s, S t) {
  using std::floor;
  S diff = s - t;
  diff -= floor(diff);
  const S sign = (m % 2 == 1) ? S(1) : S(-1);
  return scaled_bernoulli(m, s) * scaled_bernoulli(m, t) + sign * scaled_bernoulli(2 * m, diff);
}

/// Kernel matrix K_1(a_i, b_j).
Matrix kernel_matrix(int m, const Vector& a, const Vector& b);

/// Quantities entering the representer-coefficient problem.
struct SobolevDesign {
  int m = 2;
  Vector grid;          // covariate grid
  Vector weights;       // trapezoid weights on grid
  Matrix weighted_x;    // n x T, X_il * w_l
  Matrix psi;           // n x m, s_ij = int X_i psi_j
  Matrix xi;            // n x n, xi_ij = int int X_i K_1 X_j
  Vector out_grid;      // G output points
  Matrix psi_eval;      // m x G
  Matrix kx_eval;       // n x G, (K_1 X_i)(t_g)
  Matrix psi_grid;      // m x T on the covariate grid
  Matrix kx_grid;       // n x T on the covariate grid
  // Spectral factorization of xi restricted to its numerical range.
  Matrix xi_basis;      // n x r eigenvectors
  Vector xi_values;     // r eigenvalues (> 1e-12 * max)

  Index nodes() const { return xi.rows(); }
  Index order() const { return m; }
};

/// Builds s, Xi and evaluation tables with trapezoidal quadrature. An empty
/// `out_grid` reuses the covariate grid.
SobolevDesign build_design(const FunctionalSample& X, int m, const Vector& out_grid = Vector());

/// Representer coefficients for communities 1..K; community 0 is implicit.
struct SlopeCoefficients {
  Vector alpha;  // K
  Matrix d;      // K x m
  Matrix c;      // K x n

  static SlopeCoefficients zeros(Index K, Index m, Index n) {
    return {Vector::Zero(K), Matrix::Zero(K, m), Matrix::Zero(K, n)};
  }
  Index communities() const { return alpha.size(); }
  bool all_finite() const { return alpha.allFinite() && d.allFinite() && c.allFinite(); }
};

/// beta_k at out_grid[g]; k = 0 is the reference community and returns 0.
double beta_eval(const SlopeCoefficients& coeffs, const SobolevDesign& design, int k, Index g);

/// beta_k on the whole output grid.
Vector beta_on_output_grid(const SlopeCoefficients& coeffs, const SobolevDesign& design, int k);

/// beta_k on the covariate grid.
Vector beta_on_covariate_grid(const SlopeCoefficients& coeffs, const SobolevDesign& design, int k);

/// beta_k at arbitrary points (kernel sections are integrated against X).
Vector beta_at(const SlopeCoefficients& coeffs, const SobolevDesign& design, int k,
               const Vector& points);

/// Representer feature row (psi(t), (K_1 X_.)(t)) at arbitrary points: rows are
/// points, columns are m + n.
Matrix representer_features(const SobolevDesign& design, const Vector& points);

/// J(beta) = sum_k c_k^T Xi c_k.
double penalty(const SlopeCoefficients& coeffs, const SobolevDesign& design);

/// Linear predictors R_ik = alpha_k + d_k . s_i + c_k . xi_i, n x K.
Matrix linear_predictors(const SlopeCoefficients& coeffs, const SobolevDesign& design);

}  // namespace fsbm
