#pragma once

#include <string>
#include <vector>

#include "fsbm/functional.hpp"
#include "fsbm/network.hpp"
#include "fsbm/sobolev.hpp"
#include "fsbm/types.hpp"
#include "fsbm/variational.hpp"

namespace fsbm {

/// Complete-data penalized negative log-likelihood
///   -sum_{i<j} [A_ij log B_{Z_i Z_j} + (1 - A_ij) log(1 - B_{Z_i Z_j})]
///   -sum_i [R_{i Z_i} - log(1 + sum_k exp R_ik)] + (lambda/2) roughness,
/// with R_{i0} = 0. B is clamped to [1e-6, 1 - 1e-6].
double complete_penalized_nll(const AdjacencyMatrix& A, const CommunityLabels& Z,
                              const Matrix& predictors, const BlockMatrix& B, double lambda,
                              double roughness);

double complete_penalized_nll(const AdjacencyMatrix& A, const CommunityLabels& Z,
                              const SlopeCoefficients& coeffs, const BlockMatrix& B,
                              double lambda, const SobolevDesign& design);

/// Empirical covariance kernel C(s,t) = n^{-1} sum_i Sigma_i X_i(s) X_i(t), where
/// Sigma_i = diag(W_i) - W_i W_i^T over communities 1..K.
struct CovKernel {
  Vector grid;
  Index communities = 1;  // K
  Matrix values;          // (K T) x (K T); block (k, l) holds C_kl on the grid

  Index grid_size() const { return grid.size(); }
  Matrix block(Index k, Index l) const;
  /// K x K matrix at grid indices (s, t).
  Matrix at(Index s, Index t) const;
};

CovKernel estimate_cov_kernel(const FunctionalSample& X, const SlopeCoefficients& coeffs,
                              const SobolevDesign& design);

/// Values of the Galerkin basis {psi_1..psi_m, K_1(g_1, .), ...} at `points`
/// (points x basis).
Matrix galerkin_basis(int m, const Vector& anchors, const Vector& points);

/// Anchors g_j = (j - 1/2)/(N - m), j = 1..N-m.
Vector galerkin_anchors(int m, int basis_size);

/// Simultaneous diagonalization of V(f,g) = int int C f g and J(f,g) = int f^(m) g^(m).
struct EigenSystem {
  int m = 2;
  double lambda = 0.0;
  Index n = 0;
  Vector anchors;
  Vector rho;                  // finite eigenvalues, nondecreasing
  Matrix coefficients;         // basis x count, V-normalized eigenfunctions
  std::vector<int> community;  // community (1..K) of each eigenpair
  Vector grid;
  Matrix phi;                  // count x T, eigenfunctions on the covariate grid
  double zeta = 0.0;
  bool zeta_fallback = false;
  double h = 0.0;
  Index dropped = 0;           // directions with V numerically zero (rho = infinity)

  Index size() const { return rho.size(); }
  /// Eigenfunctions at arbitrary points, count x points.
  Matrix phi_at(const Vector& points) const;
};

/// Galerkin solution of J(y, phi) = rho V(y, phi) with `basis_size` basis
/// functions. K > 1 is handled only when the cross-community blocks of C
/// vanish; otherwise UnsupportedError.
EigenSystem solve_eigensystem(const CovKernel& C, int m, double lambda, Index n,
                              int basis_size = 64);

struct MpResult {
  double value = 0.0;
  Index terms = 0;
};

/// m_p = sum_nu h / (1 + h^{2 zeta} rho_nu)^p over the available spectrum.
MpResult compute_mp(const Vector& rho, double h, double zeta, int p);
MpResult compute_mp(const EigenSystem& es, int p);

struct PlrtResult {
  std::string variant;  // "simple" or "composite"
  double statistic = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double h = 0.0;
  double zeta = 0.0;
  double df = 0.0;
  double scale = 0.0;
  double p_value = 1.0;
  bool floored = false;
  Index n_eigs_used = 0;
};

/// Chi-square calibration: scale * statistic ~ chi2(df), df = m1^2 / (m2 h),
/// scale = 2 m1 / m2. Negative statistics are floored at zero.
PlrtResult calibrate_plrt(double statistic, const EigenSystem& es, const std::string& variant);

/// Null parameters for the simple test: B, alpha (K) and beta (K x T on the
/// covariate grid).
struct NullParameters {
  BlockMatrix B;
  Vector alpha;
  Matrix beta;
};

/// int_0^1 |f^(m)|^2 for curves tabulated on `grid` (rows are curves), by
/// repeated divided differences and trapezoidal quadrature.
double grid_roughness(const Matrix& curves, const Vector& grid, int m);

/// Linear predictors alpha_k + int X_i beta_k for beta tabulated on the covariate grid.
Matrix grid_predictors(const FunctionalSample& X, const Vector& alpha, const Matrix& beta);

/// Relabeling sigma (new label sigma[old]) of zhat that minimizes the complete
/// negative log-likelihood at the given parameters.
std::vector<int> align_to_parameters(const AdjacencyMatrix& A, const CommunityLabels& zhat,
                                     const Matrix& predictors, const BlockMatrix& B);

CommunityLabels relabel(const CommunityLabels& z, const std::vector<int>& sigma);

/// PLRT for H0: theta = theta0 at labels zhat (aligned to theta0 first).
PlrtResult plrt_simple(const AdjacencyMatrix& A, const FunctionalSample& X,
                       const NullParameters& theta0, const FitResult& fitted,
                       const SobolevDesign& design, const CommunityLabels& zhat,
                       const EigenSystem& es);

/// Shifted Legendre polynomials orthonormal on [0,1], degrees 0..degree, at
/// `points` (points x (degree+1)).
Matrix shifted_legendre(int degree, const Vector& points);

/// PLRT for H0: every beta_k is a polynomial of degree <= `degree`. The null
/// model is refit with the fitted responsibilities and block matrix.
PlrtResult plrt_composite(const AdjacencyMatrix& A, const FunctionalSample& X, int degree,
                          const FitResult& fitted, const SobolevDesign& design,
                          const CommunityLabels& zhat, const EigenSystem& es,
                          const FitOptions& options = {});

enum class CiMethod { laplace, asymptotic };

std::string to_string(CiMethod method);
CiMethod parse_ci_method(const std::string& name);

struct CiBand {
  int community = 1;
  CiMethod method = CiMethod::laplace;
  Vector t;
  Vector estimate;
  Vector sd;
  Vector lower;
  Vector upper;
};

/// Pointwise bands beta_k(t) +/- z sd(t) for k = 1..K. The asymptotic method
/// needs the eigen-system; the Laplace method ignores it.
std::vector<CiBand> pointwise_ci(const FitResult& fitted, const SobolevDesign& design,
                                 const EigenSystem* es, const Vector& points, double level,
                                 CiMethod method = CiMethod::laplace);

}  // namespace fsbm
