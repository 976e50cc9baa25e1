#include "fsbm/variational.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fsbm {

namespace {

// Log of 1 + sum_k exp(r_k) and the softmax with the reference class first.
double log_partition(const Eigen::Ref<const Eigen::RowVectorXd>& r) {
  const double top = r.size() > 0 ? std::max(0.0, r.maxCoeff()) : 0.0;
  return top + std::log(std::exp(-top) + (r.array() - top).exp().sum());
}

void check_finite(double value, const char* term) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string("non-finite value in objective term: ") + term);
  }
}

// A * Q through the neighbor lists.
Matrix adjacency_times(const AdjacencyMatrix& A, const Matrix& q) {
  Matrix out = Matrix::Zero(q.rows(), q.cols());
  const auto& nbrs = A.neighbors();
  for (Index i = 0; i < q.rows(); ++i) {
    for (const Index j : nbrs[static_cast<std::size_t>(i)]) out.row(i) += q.row(j);
  }
  return out;
}

// sum_{i<j} sum_{a,b} q_ia q_jb [A_ij log B_ab + (1 - A_ij) log(1 - B_ab)]
double expected_edge_loglik(const ResponsibilityMatrix& q, const AdjacencyMatrix& A,
                            const BlockMatrix& B) {
  const BlockMatrix clamped = clamp_block_matrix(B);
  const Matrix log_b = clamped.values.array().log().matrix();
  const Matrix log_1mb = (1.0 - clamped.values.array()).log().matrix();
  const Matrix edges = q.transpose() * adjacency_times(A, q);
  const Vector s = q.colwise().sum().transpose();
  const Matrix pairs = s * s.transpose() - q.transpose() * q;
  return 0.5 * ((edges.array() * log_b.array()).sum() +
                ((pairs - edges).array() * log_1mb.array()).sum());
}

}  // namespace

void validate_responsibilities(const ResponsibilityMatrix& q, double tol) {
  if (q.cols() < 1) throw InputError("responsibilities need at least one community");
  if ((q.array() < 0.0).any() || !q.allFinite()) {
    throw InputError("responsibilities must be finite and nonnegative");
  }
  const Vector sums = q.rowwise().sum();
  if (((sums.array() - 1.0).abs() > tol).any()) {
    throw InputError("responsibility rows must sum to one");
  }
}

Matrix membership_weights(const Matrix& predictors) {
  const Index n = predictors.rows();
  const Index K = predictors.cols();
  Matrix w(n, K + 1);
  for (Index i = 0; i < n; ++i) {
    const double lse = log_partition(predictors.row(i));
    w(i, 0) = std::exp(-lse);
    for (Index k = 0; k < K; ++k) w(i, k + 1) = std::exp(predictors(i, k) - lse);
  }
  return w;
}

double objective(const VariationalState& state, const AdjacencyMatrix& A,
                 const SobolevDesign& design) {
  const ResponsibilityMatrix& q = state.q;
  if (q.rows() != A.size() || q.rows() != design.nodes() ||
      q.cols() != state.coeffs.communities() + 1 || state.B.communities() != q.cols()) {
    throw InputError("objective: inconsistent dimensions");
  }
  const double edge = expected_edge_loglik(q, A, state.B);
  check_finite(edge, "edge log-likelihood");

  const Matrix r = linear_predictors(state.coeffs, design);
  double label = 0.0;
  for (Index i = 0; i < q.rows(); ++i) {
    label += q.row(i).tail(r.cols()).dot(r.row(i)) - log_partition(r.row(i));
  }
  check_finite(label, "membership log-likelihood");

  double entropy = 0.0;
  for (Index k = 0; k < q.cols(); ++k) {
    for (Index i = 0; i < q.rows(); ++i) {
      if (q(i, k) > 0.0) entropy += q(i, k) * std::log(q(i, k));
    }
  }
  const double pen = 0.5 * state.lambda * penalty(state.coeffs, design);
  check_finite(pen, "roughness penalty");
  return -edge - label + entropy + pen;
}

double eta_objective(const SlopeCoefficients& coeffs, const SobolevDesign& design,
                     const ResponsibilityMatrix& q, double lambda) {
  const Matrix r = linear_predictors(coeffs, design);
  double value = 0.0;
  for (Index i = 0; i < r.rows(); ++i) {
    value += -q.row(i).tail(r.cols()).dot(r.row(i)) + log_partition(r.row(i));
  }
  return value + 0.5 * lambda * penalty(coeffs, design);
}

Matrix score_eta(const SlopeCoefficients& coeffs, const SobolevDesign& design,
                 const ResponsibilityMatrix& q, double lambda) {
  const Index n = design.nodes();
  const Index m = design.m;
  const Index K = coeffs.communities();
  const Matrix w = membership_weights(linear_predictors(coeffs, design));
  const Matrix resid = w.rightCols(K) - q.rightCols(K);  // n x K
  Matrix score(K, 1 + m + n);
  for (Index k = 0; k < K; ++k) {
    score(k, 0) = resid.col(k).sum();
    score.block(k, 1, 1, m) = (design.psi.transpose() * resid.col(k)).transpose();
    score.block(k, 1 + m, 1, n) =
        (design.xi * (resid.col(k) + lambda * coeffs.c.row(k).transpose())).transpose();
  }
  return score;
}

EtaProblem make_eta_problem(const SobolevDesign& design, bool use_covariates) {
  EtaProblem problem;
  const Index n = design.nodes();
  if (!use_covariates) {
    problem.features = Matrix::Ones(n, 1);
    problem.penalty_weights = Vector::Zero(1);
    problem.m = 0;
    problem.delta_to_c = Matrix::Zero(n, 0);
    problem.c_to_delta = Matrix::Zero(0, n);
    return problem;
  }
  const Index m = design.m;
  const Index r = design.xi_values.size();
  const Vector root = design.xi_values.cwiseSqrt();
  problem.m = m;
  problem.features.resize(n, 1 + m + r);
  problem.features.col(0).setOnes();
  problem.features.middleCols(1, m) = design.psi;
  problem.features.rightCols(r) = design.xi_basis * root.asDiagonal();
  problem.penalty_weights = Vector::Zero(1 + m + r);
  problem.penalty_weights.tail(r).setOnes();
  problem.delta_to_c = design.xi_basis * root.cwiseInverse().asDiagonal();
  problem.c_to_delta = root.asDiagonal() * design.xi_basis.transpose();
  return problem;
}

Matrix to_reduced(const SlopeCoefficients& coeffs, const EtaProblem& problem) {
  const Index K = coeffs.communities();
  Matrix theta(problem.parameters(), K);
  theta.row(0) = coeffs.alpha.transpose();
  if (problem.m > 0) {
    theta.middleRows(1, problem.m) = coeffs.d.transpose();
    theta.bottomRows(problem.c_to_delta.rows()) = problem.c_to_delta * coeffs.c.transpose();
  }
  return theta;
}

SlopeCoefficients from_reduced(const Matrix& theta, const EtaProblem& problem, Index n) {
  const Index K = theta.cols();
  SlopeCoefficients coeffs;
  coeffs.alpha = theta.row(0).transpose();
  if (problem.m > 0) {
    coeffs.d = theta.middleRows(1, problem.m).transpose();
    coeffs.c = (problem.delta_to_c * theta.bottomRows(problem.delta_to_c.cols())).transpose();
  } else {
    coeffs.d = Matrix::Zero(K, 0);
    coeffs.c = Matrix::Zero(K, n);
  }
  return coeffs;
}

double multilogit_objective(const Matrix& features, const Vector& penalty_weights,
                            const ResponsibilityMatrix& q, double lambda, const Matrix& theta) {
  const Matrix r = features * theta;
  double value = 0.0;
  for (Index i = 0; i < r.rows(); ++i) {
    value += -q.row(i).tail(r.cols()).dot(r.row(i)) + log_partition(r.row(i));
  }
  const double pen = (penalty_weights.asDiagonal() * theta.cwiseAbs2()).sum();
  return value + 0.5 * lambda * pen;
}

Matrix multilogit_hessian(const Matrix& features, const Vector& penalty_weights, double lambda,
                          const Matrix& theta) {
  const Index p = features.cols();
  const Index K = theta.cols();
  const Matrix w = membership_weights(features * theta).rightCols(K);
  Matrix h = Matrix::Zero(p * K, p * K);
  for (Index k = 0; k < K; ++k) {
    for (Index l = k; l < K; ++l) {
      Vector weight = -w.col(k).cwiseProduct(w.col(l));
      if (k == l) weight += w.col(k);
      const Matrix block = features.transpose() * weight.asDiagonal() * features;
      h.block(k * p, l * p, p, p) = block;
      if (l != k) h.block(l * p, k * p, p, p) = block.transpose();
    }
    h.block(k * p, k * p, p, p).diagonal() += lambda * penalty_weights;
  }
  return h;
}

MultilogitSolution solve_penalized_multilogit(const Matrix& features,
                                              const Vector& penalty_weights,
                                              const ResponsibilityMatrix& q, double lambda,
                                              Matrix theta, int max_iterations,
                                              double tolerance) {
  const Index p = features.cols();
  const Index K = theta.cols();
  MultilogitSolution sol;
  double current = multilogit_objective(features, penalty_weights, q, lambda, theta);
  for (int it = 0; it < max_iterations; ++it) {
    const Matrix w = membership_weights(features * theta).rightCols(K);
    const Matrix grad = features.transpose() * (w - q.rightCols(K)) +
                        lambda * (penalty_weights.asDiagonal() * theta);
    sol.gradient_norm = grad.cwiseAbs().maxCoeff();
    sol.iterations = it;
    if (sol.gradient_norm < tolerance) {
      sol.converged = true;
      break;
    }
    Matrix h = multilogit_hessian(features, penalty_weights, lambda, theta);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
    Vector values = eig.eigenvalues();
    if (values.minCoeff() < 1e-12) values.array() += 1e-10;
    // Step = -H^{-1} g via the eigendecomposition; nonpositive directions
    // after jitter are skipped.
    const Vector g = Eigen::Map<const Vector>(grad.data(), p * K);
    Vector coef = eig.eigenvectors().transpose() * g;
    for (Index j = 0; j < coef.size(); ++j) coef(j) = values(j) > 0.0 ? coef(j) / values(j) : 0.0;
    const Vector step_vec = -(eig.eigenvectors() * coef);
    const Matrix step = Eigen::Map<const Matrix>(step_vec.data(), p, K);

    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      const Matrix trial = theta + t * step;
      const double value = multilogit_objective(features, penalty_weights, q, lambda, trial);
      if (std::isfinite(value) && value <= current) {
        improved = value < current || t == 1.0;
        theta = trial;
        current = value;
        break;
      }
      t *= 0.5;
    }
    if (!improved) {
      // No representable decrease left; accept if the gradient is tiny.
      sol.converged = sol.gradient_norm < std::sqrt(tolerance);
      break;
    }
    sol.iterations = it + 1;
  }
  if (!sol.converged && sol.iterations >= max_iterations) {
    const Matrix w = membership_weights(features * theta).rightCols(K);
    const Matrix grad = features.transpose() * (w - q.rightCols(K)) +
                        lambda * (penalty_weights.asDiagonal() * theta);
    sol.gradient_norm = grad.cwiseAbs().maxCoeff();
    sol.converged = sol.gradient_norm < tolerance;
  }
  sol.theta = std::move(theta);
  return sol;
}

EtaUpdate update_eta(const SlopeCoefficients& start, const SobolevDesign& design,
                     const ResponsibilityMatrix& q, double lambda, const FitOptions& options) {
  validate_responsibilities(q, 1e-8);
  const EtaProblem problem = make_eta_problem(design, options.use_covariates);
  MultilogitSolution sol = solve_penalized_multilogit(
      problem.features, problem.penalty_weights, q, lambda, to_reduced(start, problem),
      options.newton_max_iterations, options.newton_tolerance);
  EtaUpdate update;
  update.coeffs = from_reduced(sol.theta, problem, design.nodes());
  if (!options.use_covariates) {
    update.coeffs.d = Matrix::Zero(start.communities(), design.m);
  }
  update.converged = sol.converged;
  update.iterations = sol.iterations;
  update.gradient_norm = sol.gradient_norm;
  return update;
}

BlockMatrix update_B(const ResponsibilityMatrix& q, const AdjacencyMatrix& A) {
  if (q.rows() != A.size()) throw InputError("update_B: dimension mismatch");
  const Matrix edges = q.transpose() * adjacency_times(A, q);
  const Vector s = q.colwise().sum().transpose();
  const Matrix pairs = s * s.transpose() - q.transpose() * q;
  BlockMatrix B;
  B.values.resize(q.cols(), q.cols());
  for (Index b = 0; b < q.cols(); ++b) {
    for (Index a = 0; a < q.cols(); ++a) {
      const double num = 0.5 * (edges(a, b) + edges(b, a));
      const double den = 0.5 * (pairs(a, b) + pairs(b, a));
      B.values(a, b) = den > 0.0 ? num / den : kBlockClampLow;
    }
  }
  return clamp_block_matrix(std::move(B));
}

ResponsibilityMatrix update_q(const VariationalState& state, const AdjacencyMatrix& A,
                              const Matrix& predictors, const FitOptions& options,
                              const std::vector<Index>* active) {
  ResponsibilityMatrix q = state.q;
  const Index n = q.rows();
  const Index C = q.cols();
  if (A.size() != n || predictors.rows() != n || predictors.cols() != C - 1) {
    throw InputError("update_q: inconsistent dimensions");
  }
  const BlockMatrix B = clamp_block_matrix(state.B);
  const Matrix log_1mb = (1.0 - B.values.array()).log().matrix();
  const Matrix contrast = B.values.array().log().matrix() - log_1mb;

  Matrix aq = adjacency_times(A, q);
  Eigen::RowVectorXd totals = q.colwise().sum();
  const auto& nbrs = A.neighbors();

  std::vector<Index> order;
  if (active) {
    order = *active;
  } else {
    order.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  }

  Eigen::RowVectorXd a(C);
  for (int sweep = 0; sweep < options.q_max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (const Index i : order) {
      a(0) = 0.0;
      a.tail(C - 1) = predictors.row(i);
      a += aq.row(i) * contrast + (totals - q.row(i)) * log_1mb;
      const double top = a.maxCoeff();
      Eigen::RowVectorXd next = (a.array() - top).exp();
      next /= next.sum();
      next = next.cwiseMax(kResponsibilityFloor);
      next /= next.sum();
      const Eigen::RowVectorXd delta = next - q.row(i);
      max_change = std::max(max_change, delta.cwiseAbs().maxCoeff());
      q.row(i) = next;
      totals += delta;
      for (const Index j : nbrs[static_cast<std::size_t>(i)]) aq.row(j) += delta;
    }
    if (max_change < options.q_tolerance) break;
  }
  return q;
}

ResponsibilityMatrix update_q(const VariationalState& state, const AdjacencyMatrix& A,
                              const SobolevDesign& design, const FitOptions& options) {
  return update_q(state, A, linear_predictors(state.coeffs, design), options);
}

CommunityLabels argmax_labels(const ResponsibilityMatrix& q) {
  std::vector<int> labels(static_cast<std::size_t>(q.rows()));
  for (Index i = 0; i < q.rows(); ++i) {
    Index arg = 0;
    for (Index k = 1; k < q.cols(); ++k) {
      if (q(i, k) > q(i, arg)) arg = k;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return CommunityLabels(std::move(labels), static_cast<int>(q.cols()));
}

FitResult fit(const AdjacencyMatrix& A, const SobolevDesign& design, int K, double lambda,
              const ResponsibilityMatrix& init, const FitOptions& options) {
  if (!(lambda >= 0.0)) throw InputError("lambda must be nonnegative");
  const Index n = A.size();
  if (design.nodes() != n || init.rows() != n || init.cols() != K + 1) {
    throw InputError("fit: adjacency, covariates and initial responsibilities disagree in size");
  }
  validate_responsibilities(init, 1e-8);

  FitResult result;
  VariationalState& state = result.state;
  state.lambda = lambda;
  state.q = init.cwiseMax(kResponsibilityFloor);
  state.q = (state.q.array().colwise() / state.q.rowwise().sum().array()).matrix();
  state.coeffs = SlopeCoefficients::zeros(K, design.m, n);
  state.B = update_B(state.q, A);

  double previous = 0.0;
  for (int r = 0; r < options.max_outer; ++r) {
    const EtaUpdate eta = update_eta(state.coeffs, design, state.q, lambda, options);
    state.coeffs = eta.coeffs;
    result.eta_converged = result.eta_converged && eta.converged;
    state.B = update_B(state.q, A);
    state.q = update_q(state, A, linear_predictors(state.coeffs, design), options);

    const double value = objective(state, A, design);
    state.objective_trace.push_back(value);
    result.iterations = r + 1;
    if (r > 0 && std::abs(value - previous) <= options.outer_tolerance * std::max(1.0, std::abs(previous))) {
      result.converged = true;
      break;
    }
    previous = value;
  }
  result.labels = argmax_labels(state.q);
  return result;
}

SlopeCoefficients permute_coefficients(const SlopeCoefficients& coeffs,
                                       const std::vector<int>& perm) {
  const Index K = coeffs.communities();
  if (static_cast<Index>(perm.size()) != K + 1) {
    throw InputError("permutation size must equal the number of communities");
  }
  // Predictor of old community j (0 for the reference).
  auto alpha_of = [&](int j) { return j == 0 ? 0.0 : coeffs.alpha(j - 1); };
  auto d_of = [&](int j) -> Eigen::RowVectorXd {
    return j == 0 ? Eigen::RowVectorXd::Zero(coeffs.d.cols()) : Eigen::RowVectorXd(coeffs.d.row(j - 1));
  };
  auto c_of = [&](int j) -> Eigen::RowVectorXd {
    return j == 0 ? Eigen::RowVectorXd::Zero(coeffs.c.cols()) : Eigen::RowVectorXd(coeffs.c.row(j - 1));
  };
  const int base = perm[0];
  SlopeCoefficients out = SlopeCoefficients::zeros(K, coeffs.d.cols(), coeffs.c.cols());
  for (Index a = 1; a <= K; ++a) {
    const int old = perm[static_cast<std::size_t>(a)];
    out.alpha(a - 1) = alpha_of(old) - alpha_of(base);
    out.d.row(a - 1) = d_of(old) - d_of(base);
    out.c.row(a - 1) = c_of(old) - c_of(base);
  }
  return out;
}

VariationalState permute_state(const VariationalState& state, const std::vector<int>& perm) {
  VariationalState out = state;
  const Index C = state.q.cols();
  for (Index a = 0; a < C; ++a) {
    out.q.col(a) = state.q.col(perm[static_cast<std::size_t>(a)]);
    for (Index b = 0; b < C; ++b) {
      out.B.values(a, b) = state.B.values(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
    }
  }
  out.coeffs = permute_coefficients(state.coeffs, perm);
  return out;
}

}  // namespace fsbm
