#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fsbm/network.hpp"
#include "fsbm/sobolev.hpp"
#include "fsbm/types.hpp"

namespace fsbm {

/// Variational membership probabilities q_ik, n x (K+1), rows on the simplex.
using ResponsibilityMatrix = Matrix;

inline constexpr double kResponsibilityFloor = 1e-12;

/// Throws InputError unless every row is nonnegative and sums to one.
void validate_responsibilities(const ResponsibilityMatrix& q, double tol = 1e-10);

struct VariationalState {
  ResponsibilityMatrix q;
  SlopeCoefficients coeffs;
  BlockMatrix B;
  double lambda = 0.0;
  std::vector<double> objective_trace;

  /// K + 1.
  Index communities() const { return q.cols(); }
};

struct FitOptions {
  int max_outer = 200;
  double outer_tolerance = 1e-6;
  int newton_max_iterations = 50;
  double newton_tolerance = 1e-8;
  int q_max_sweeps = 100;
  double q_tolerance = 1e-8;
  /// false fits the adjacency-only model (beta fixed at zero, alpha free).
  bool use_covariates = true;
};

struct CvRecord {
  double lambda = 0.0;
  double mean_loglik = 0.0;
  double std_error = 0.0;
  int folds_used = 0;
};

struct LambdaPath {
  std::vector<CvRecord> records;
  double chosen = 0.0;
  int folds = 0;
  int skipped_folds = 0;
};

struct FitResult {
  VariationalState state;
  CommunityLabels labels;
  int iterations = 0;
  bool converged = false;
  bool eta_converged = true;
  std::optional<LambdaPath> lambda_path;
};

/// Softmax membership probabilities W_ik (column 0 is the reference).
Matrix membership_weights(const Matrix& predictors);

/// Variational free energy L_{n,lambda}(Q; A, X; theta), i.e.
/// -E_Q[log P(A,Z,X;theta) - log Q(Z)] + (lambda/2) J(beta).
double objective(const VariationalState& state, const AdjacencyMatrix& A,
                 const SobolevDesign& design);

/// The eta-part of the objective for fixed q:
/// sum_i [-sum_k q_ik R_ik + log(1 + sum_k exp R_ik)] + (lambda/2) sum_k c_k^T Xi c_k.
double eta_objective(const SlopeCoefficients& coeffs, const SobolevDesign& design,
                     const ResponsibilityMatrix& q, double lambda);

/// Gradient of eta_objective in the full coordinates (alpha_k, d_k, c_k):
/// row k-1 holds sum_i (p_ik - q_ik)(1, s_i, xi_i) + lambda (0, 0, Xi c_k).
Matrix score_eta(const SlopeCoefficients& coeffs, const SobolevDesign& design,
                 const ResponsibilityMatrix& q, double lambda);

/// The eta subproblem in identifiable coordinates. The kernel block uses
/// delta = Lambda^{1/2} U^T c over the numerical range of Xi = U Lambda U^T, so
/// the penalty becomes a plain ridge on delta.
struct EtaProblem {
  Matrix features;         // n x p: (1, s_i, (U Lambda^{1/2})_i)
  Vector penalty_weights;  // p: 0 on intercept and null space, 1 on delta
  Index m = 0;
  Matrix delta_to_c;       // n x r, U Lambda^{-1/2}
  Matrix c_to_delta;       // r x n, Lambda^{1/2} U^T

  Index parameters() const { return features.cols(); }
};

EtaProblem make_eta_problem(const SobolevDesign& design, bool use_covariates = true);

/// p x K parameter matrix of the reduced problem.
Matrix to_reduced(const SlopeCoefficients& coeffs, const EtaProblem& problem);
SlopeCoefficients from_reduced(const Matrix& theta, const EtaProblem& problem, Index n);

/// Objective of a penalized multinomial logit with weights q (n x (K+1)) and
/// parameters theta (p x K): sum_i [-sum_k q_ik r_ik + lse_i] + lambda/2 sum pen theta^2.
double multilogit_objective(const Matrix& features, const Vector& penalty_weights,
                            const ResponsibilityMatrix& q, double lambda, const Matrix& theta);

/// Hessian of multilogit_objective, ordered community-major (k, feature).
Matrix multilogit_hessian(const Matrix& features, const Vector& penalty_weights, double lambda,
                          const Matrix& theta);

struct MultilogitSolution {
  Matrix theta;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Newton-Raphson with step halving and Hessian jitter.
MultilogitSolution solve_penalized_multilogit(const Matrix& features,
                                              const Vector& penalty_weights,
                                              const ResponsibilityMatrix& q, double lambda,
                                              Matrix theta, int max_iterations,
                                              double tolerance);

struct EtaUpdate {
  SlopeCoefficients coeffs;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Safeguarded Newton solve of the penalized multinomial-logit subproblem,
/// warm-started from `start`.
EtaUpdate update_eta(const SlopeCoefficients& start, const SobolevDesign& design,
                     const ResponsibilityMatrix& q, double lambda,
                     const FitOptions& options = {});

/// Closed-form symmetric block-probability maximizer, clamped to
/// [1e-6, 1 - 1e-6].
BlockMatrix update_B(const ResponsibilityMatrix& q, const AdjacencyMatrix& A);

/// Node-wise coordinate ascent sweeps for q with theta fixed. `active`
/// restricts the sweep to a subset of nodes (others stay fixed).
ResponsibilityMatrix update_q(const VariationalState& state, const AdjacencyMatrix& A,
                              const Matrix& predictors, const FitOptions& options = {},
                              const std::vector<Index>* active = nullptr);

/// Convenience overload computing the predictors from the state.
ResponsibilityMatrix update_q(const VariationalState& state, const AdjacencyMatrix& A,
                              const SobolevDesign& design, const FitOptions& options = {});

/// Algorithm loop: eta update, B update, q update until the relative objective
/// change drops below options.outer_tolerance.
FitResult fit(const AdjacencyMatrix& A, const SobolevDesign& design, int K, double lambda,
              const ResponsibilityMatrix& init, const FitOptions& options = {});

/// Row argmax with ties to the smallest index.
CommunityLabels argmax_labels(const ResponsibilityMatrix& q);

/// Relabels communities: new community a is old community perm[a]. The
/// coefficients are re-referenced to the new community 0.
SlopeCoefficients permute_coefficients(const SlopeCoefficients& coeffs,
                                       const std::vector<int>& perm);
VariationalState permute_state(const VariationalState& state, const std::vector<int>& perm);

struct CvOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  double fallback_lambda = 1e-4;
  double smoothing = 0.05;
  int kmeans_restarts = 20;
  int threads = 1;
  FitOptions fit;
};

/// Default grid: 11 log-spaced values from 1e-6 to 1e-1.
std::vector<double> default_lambda_grid();

/// M-fold node cross-validation with the one-standard-error rule; returns the
/// largest lambda within one standard error of the best held-out
/// log-likelihood.
LambdaPath cross_validate_lambda(const AdjacencyMatrix& A, const FunctionalSample& X, int K,
                                 const std::vector<double>& grid, int m,
                                 const CvOptions& options = {});

}  // namespace fsbm
