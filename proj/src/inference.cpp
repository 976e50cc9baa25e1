#include "fsbm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace fsbm {

namespace {

constexpr double kDropMu = 1e-10;
constexpr double kCrossBlockTolerance = 1e-6;

Matrix sigma_weights(const Matrix& w, Index k, Index l) {
  // Column of Sigma_i,kl over nodes, communities counted from 1.
  Matrix out = -w.col(k).cwiseProduct(w.col(l));
  if (k == l) out += w.col(k);
  return out;
}

Matrix inverse_with_jitter(Matrix h) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  Vector values = eig.eigenvalues();
  if (values.minCoeff() < 1e-12) values.array() += 1e-10;
  return eig.eigenvectors() * values.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double complete_penalized_nll(const AdjacencyMatrix& A, const CommunityLabels& Z,
                              const Matrix& predictors, const BlockMatrix& B, double lambda,
                              double roughness) {
  const Index n = A.size();
  if (Z.size() != n || predictors.rows() != n) {
    throw InputError("complete_penalized_nll: inconsistent dimensions");
  }
  if (Z.num_communities() > B.communities() || predictors.cols() + 1 != B.communities()) {
    throw InputError("complete_penalized_nll: labels, predictors and block matrix disagree");
  }
  const BlockMatrix clamped = clamp_block_matrix(B);
  const Matrix log_b = clamped.values.array().log().matrix();
  const Matrix log_1mb = (-clamped.values.array()).log1p().matrix();

  double edge = 0.0;
  for (Index j = 1; j < n; ++j) {
    for (Index i = 0; i < j; ++i) {
      edge += A(i, j) != 0.0 ? log_b(Z[i], Z[j]) : log_1mb(Z[i], Z[j]);
    }
  }
  double label = 0.0;
  for (Index i = 0; i < n; ++i) {
    // log W_{iz} = R_{iz} + log W_{i0}
    const double w0 = membership_weights(predictors.row(i))(0, 0);
    label += (Z[i] == 0 ? 0.0 : predictors(i, Z[i] - 1)) + std::log(w0);
  }
  return -edge - label + 0.5 * lambda * roughness;
}

double complete_penalized_nll(const AdjacencyMatrix& A, const CommunityLabels& Z,
                              const SlopeCoefficients& coeffs, const BlockMatrix& B,
                              double lambda, const SobolevDesign& design) {
  return complete_penalized_nll(A, Z, linear_predictors(coeffs, design), B, lambda,
                                penalty(coeffs, design));
}

Matrix CovKernel::block(Index k, Index l) const {
  const Index T = grid.size();
  return values.block(k * T, l * T, T, T);
}

Matrix CovKernel::at(Index s, Index t) const {
  const Index T = grid.size();
  Matrix out(communities, communities);
  for (Index k = 0; k < communities; ++k) {
    for (Index l = 0; l < communities; ++l) out(k, l) = values(k * T + s, l * T + t);
  }
  return out;
}

CovKernel estimate_cov_kernel(const FunctionalSample& X, const SlopeCoefficients& coeffs,
                              const SobolevDesign& design) {
  if (X.size() != design.nodes()) throw InputError("covariates and design disagree in size");
  const Index K = coeffs.communities();
  const Index T = X.grid_size();
  const Index n = X.size();
  const Matrix w = membership_weights(linear_predictors(coeffs, design)).rightCols(K);
  CovKernel C;
  C.grid = X.grid();
  C.communities = K;
  C.values.resize(K * T, K * T);
  for (Index k = 0; k < K; ++k) {
    for (Index l = k; l < K; ++l) {
      const Vector s = sigma_weights(w, k, l);
      Matrix blk = X.values().transpose() * s.asDiagonal() * X.values() / double(n);
      blk = (0.5 * (blk + blk.transpose())).eval();
      C.values.block(k * T, l * T, T, T) = blk;
      C.values.block(l * T, k * T, T, T) = blk;
    }
  }
  return C;
}

Vector galerkin_anchors(int m, int basis_size) {
  const int count = basis_size - m;
  if (count < 1) throw InputError("basis size must exceed the penalty order");
  Vector g(count);
  for (int j = 0; j < count; ++j) g(j) = (j + 0.5) / count;
  return g;
}

Matrix galerkin_basis(int m, const Vector& anchors, const Vector& points) {
  Matrix F(points.size(), m + anchors.size());
  for (Index p = 0; p < points.size(); ++p) {
    F.row(p).head(m) = null_basis(m, points(p)).transpose();
    for (Index j = 0; j < anchors.size(); ++j) F(p, m + j) = kernel_eval(m, anchors(j), points(p));
  }
  return F;
}

Matrix EigenSystem::phi_at(const Vector& points) const {
  return (galerkin_basis(m, anchors, points) * coefficients).transpose();
}

EigenSystem solve_eigensystem(const CovKernel& C, int m, double lambda, Index n, int basis_size) {
  if (!(lambda >= 0.0) || n < 1) throw InputError("solve_eigensystem: need lambda >= 0, n >= 1");
  const Index K = C.communities;
  for (Index k = 0; k < K; ++k) {
    for (Index l = 0; l < K; ++l) {
      if (k != l && C.block(k, l).norm() >= kCrossBlockTolerance) {
        throw UnsupportedError(
            "covariance kernel couples communities; only block-diagonal kernels are supported");
      }
    }
  }

  EigenSystem es;
  es.m = m;
  es.lambda = lambda;
  es.n = n;
  es.grid = C.grid;
  es.anchors = galerkin_anchors(m, basis_size);
  const Vector w = trapezoid_weights(C.grid);
  const Matrix F = galerkin_basis(m, es.anchors, C.grid);
  const Index N = F.cols();

  Matrix J = Matrix::Zero(N, N);
  J.bottomRightCorner(N - m, N - m) = kernel_matrix(m, es.anchors, es.anchors);

  struct Pair {
    double rho;
    int community;
    Vector coef;
  };
  std::vector<Pair> pairs;
  for (Index k = 0; k < K; ++k) {
    const Matrix wf = w.asDiagonal() * F;
    Matrix V = wf.transpose() * C.block(k, k) * wf;
    V = (0.5 * (V + V.transpose())).eval();
    const double trace_v = V.trace();
    if (!(trace_v > 0.0)) {
      es.dropped += N;
      continue;
    }
    const double s0 = trace_v / J.trace();
    Matrix M = V + s0 * J;
    if (Eigen::LLT<Matrix>(M).info() != Eigen::Success) {
      M.diagonal().array() += 1e-12 * M.trace();
    }
    const Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(V, M);
    if (eig.info() != Eigen::Success) {
      throw NumericalError("generalized eigenproblem for the covariance kernel failed");
    }
    for (Index j = 0; j < N; ++j) {
      const double mu = eig.eigenvalues()(j);
      if (mu <= kDropMu) {
        ++es.dropped;
        continue;
      }
      Vector y = eig.eigenvectors().col(j);
      const double vnorm = y.dot(V * y);
      if (!(vnorm > 0.0)) {
        ++es.dropped;
        continue;
      }
      y /= std::sqrt(vnorm);
      // V y = mu (V + s0 J) y  <=>  J y = (1 - mu) / (mu s0) V y.
      pairs.push_back({std::max(0.0, (1.0 - mu) / (mu * s0)), static_cast<int>(k + 1), y});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.rho < b.rho; });

  const Index count = static_cast<Index>(pairs.size());
  es.rho.resize(count);
  es.coefficients.resize(N, count);
  for (Index j = 0; j < count; ++j) {
    es.rho(j) = pairs[static_cast<std::size_t>(j)].rho;
    es.coefficients.col(j) = pairs[static_cast<std::size_t>(j)].coef;
    es.community.push_back(pairs[static_cast<std::size_t>(j)].community);
  }
  es.phi = (F * es.coefficients).transpose();

  // Decay exponent: least-squares slope of log rho_nu on 2 log nu.
  std::vector<double> xs, ys;
  for (Index nu = 3; nu <= std::min<Index>(20, N) && nu <= count; ++nu) {
    const double r = es.rho(nu - 1);
    if (r > 0.0) {
      xs.push_back(2.0 * std::log(double(nu)));
      ys.push_back(std::log(r));
    }
  }
  double slope = 0.0;
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    slope = sxx > 0.0 ? sxy / sxx : 0.0;
  }
  if (slope > 0.0 && std::isfinite(slope)) {
    es.zeta = slope;
  } else {
    es.zeta = m + 1.0;
    es.zeta_fallback = true;
  }
  es.h = std::pow(lambda / double(n), 1.0 / (2.0 * es.zeta));
  return es;
}

MpResult compute_mp(const Vector& rho, double h, double zeta, int p) {
  if (p < 1) throw InputError("compute_mp: p must be at least 1");
  if (!(h > 0.0)) throw InputError("compute_mp: bandwidth must be positive");
  const double shrink = std::pow(h, 2.0 * zeta);
  MpResult out;
  for (Index nu = 0; nu < rho.size(); ++nu) {
    const double term = h / std::pow(1.0 + shrink * rho(nu), p);
    if (out.value > 0.0 && term < 1e-12 * out.value) break;
    out.value += term;
    ++out.terms;
  }
  return out;
}

MpResult compute_mp(const EigenSystem& es, int p) { return compute_mp(es.rho, es.h, es.zeta, p); }

PlrtResult calibrate_plrt(double statistic, const EigenSystem& es, const std::string& variant) {
  PlrtResult r;
  r.variant = variant;
  const MpResult m1 = compute_mp(es, 1);
  const MpResult m2 = compute_mp(es, 2);
  r.m1 = m1.value;
  r.m2 = m2.value;
  r.h = es.h;
  r.zeta = es.zeta;
  r.n_eigs_used = m1.terms;
  if (!(r.m2 > 0.0)) throw NumericalError("PLRT calibration: m2 is zero");
  r.df = r.m1 * r.m1 / (r.m2 * r.h);
  r.scale = 2.0 * r.m1 / r.m2;
  if (!(r.df > 0.0) || !std::isfinite(r.df)) throw NumericalError("PLRT calibration: df <= 0");
  if (!std::isfinite(statistic)) throw NumericalError("PLRT statistic is not finite");
  r.floored = statistic < 0.0;
  r.statistic = std::max(statistic, 0.0);
  const boost::math::chi_squared dist(r.df);
  r.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, r.scale * r.statistic)), 0.0, 1.0);
  return r;
}

double grid_roughness(const Matrix& curves, const Vector& grid, int m) {
  if (grid.size() <= m) throw InputError("grid too coarse for the penalty order");
  double total = 0.0;
  for (Index k = 0; k < curves.rows(); ++k) {
    Vector f = curves.row(k).transpose();
    Vector x = grid;
    for (int order = 0; order < m; ++order) {
      const Index len = f.size() - 1;
      Vector df(len), mid(len);
      for (Index l = 0; l < len; ++l) {
        df(l) = (f(l + 1) - f(l)) / (x(l + 1) - x(l));
        mid(l) = 0.5 * (x(l + 1) + x(l));
      }
      f = df;
      x = mid;
    }
    // Extend the tabulated derivative flat to [0,1] before integrating.
    Vector xe(x.size() + 2), fe(f.size() + 2);
    xe << grid(0), x, grid(grid.size() - 1);
    fe << f(0), f, f(f.size() - 1);
    const Vector sq = fe.cwiseAbs2();
    for (Index l = 0; l + 1 < xe.size(); ++l) total += 0.5 * (xe(l + 1) - xe(l)) * (sq(l) + sq(l + 1));
  }
  return total;
}

Matrix grid_predictors(const FunctionalSample& X, const Vector& alpha, const Matrix& beta) {
  if (beta.rows() != alpha.size() || beta.cols() != X.grid_size()) {
    throw InputError("null slope must be K x T on the covariate grid");
  }
  Matrix r = X.values() * X.weights().asDiagonal() * beta.transpose();
  r.rowwise() += alpha.transpose();
  return r;
}

CommunityLabels relabel(const CommunityLabels& z, const std::vector<int>& sigma) {
  std::vector<int> out(static_cast<std::size_t>(z.size()));
  for (Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = sigma[static_cast<std::size_t>(z[i])];
  return CommunityLabels(std::move(out), z.num_communities());
}

std::vector<int> align_to_parameters(const AdjacencyMatrix& A, const CommunityLabels& zhat,
                                     const Matrix& predictors, const BlockMatrix& B) {
  const int classes = static_cast<int>(B.communities());
  if (classes > 8) throw UnsupportedError("label alignment enumerates at most 8 communities");
  std::vector<int> sigma(static_cast<std::size_t>(classes));
  std::iota(sigma.begin(), sigma.end(), 0);
  const CommunityLabels z(zhat.values(), classes);
  std::vector<int> best = sigma;
  double best_value = std::numeric_limits<double>::infinity();
  do {
    const double value = complete_penalized_nll(A, relabel(z, sigma), predictors, B, 0.0, 0.0);
    if (value < best_value) {
      best_value = value;
      best = sigma;
    }
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return best;
}

PlrtResult plrt_simple(const AdjacencyMatrix& A, const FunctionalSample& X,
                       const NullParameters& theta0, const FitResult& fitted,
                       const SobolevDesign& design, const CommunityLabels& zhat,
                       const EigenSystem& es) {
  const VariationalState& state = fitted.state;
  const double lambda = state.lambda;
  const Matrix null_pred = grid_predictors(X, theta0.alpha, theta0.beta);
  const CommunityLabels z = relabel(zhat, align_to_parameters(A, zhat, null_pred, theta0.B));
  const double null_value = complete_penalized_nll(
      A, z, null_pred, theta0.B, lambda, grid_roughness(theta0.beta, X.grid(), design.m));
  // Each side sees Zhat under its own best relabeling, so a label-switched fit
  // is compared on equal terms.
  const Matrix fit_pred = linear_predictors(state.coeffs, design);
  const CommunityLabels zfit = relabel(zhat, align_to_parameters(A, zhat, fit_pred, state.B));
  const double fit_value =
      complete_penalized_nll(A, zfit, fit_pred, state.B, lambda, penalty(state.coeffs, design));
  return calibrate_plrt(null_value - fit_value, es, "simple");
}

Matrix shifted_legendre(int degree, const Vector& points) {
  if (degree < 0) throw InputError("polynomial degree must be nonnegative");
  Matrix P(points.size(), degree + 1);
  for (Index i = 0; i < points.size(); ++i) {
    const double x = 2.0 * points(i) - 1.0;
    double prev = 1.0, cur = x;
    for (int j = 0; j <= degree; ++j) {
      double value;
      if (j == 0) {
        value = 1.0;
      } else if (j == 1) {
        value = x;
      } else {
        const double next = ((2.0 * j - 1.0) * x * cur - (j - 1.0) * prev) / j;
        prev = cur;
        cur = next;
        value = next;
      }
      P(i, j) = std::sqrt(2.0 * j + 1.0) * value;
    }
  }
  return P;
}

PlrtResult plrt_composite(const AdjacencyMatrix& A, const FunctionalSample& X, int degree,
                          const FitResult& fitted, const SobolevDesign& design,
                          const CommunityLabels& zhat, const EigenSystem& es,
                          const FitOptions& options) {
  if (degree < 0 || degree >= design.m) {
    throw InputError("composite null degree must satisfy 0 <= degree < m");
  }
  const VariationalState& state = fitted.state;
  const Index K = state.coeffs.communities();
  const Matrix poly = shifted_legendre(degree, X.grid());
  Matrix features(X.size(), degree + 2);
  features.col(0).setOnes();
  features.rightCols(degree + 1) = X.values() * X.weights().asDiagonal() * poly;
  const MultilogitSolution null_fit =
      solve_penalized_multilogit(features, Vector::Zero(degree + 2), state.q, 0.0,
                                 Matrix::Zero(degree + 2, K), options.newton_max_iterations,
                                 options.newton_tolerance);
  const Matrix null_pred = features * null_fit.theta;
  const Matrix fit_pred = linear_predictors(state.coeffs, design);

  const CommunityLabels z = relabel(zhat, align_to_parameters(A, zhat, fit_pred, state.B));
  const double null_value = complete_penalized_nll(A, z, null_pred, state.B, state.lambda, 0.0);
  const double fit_value =
      complete_penalized_nll(A, z, fit_pred, state.B, state.lambda, penalty(state.coeffs, design));
  return calibrate_plrt(null_value - fit_value, es, "composite");
}

std::string to_string(CiMethod method) {
  return method == CiMethod::laplace ? "laplace" : "asymptotic";
}

CiMethod parse_ci_method(const std::string& name) {
  if (name == "laplace") return CiMethod::laplace;
  if (name == "asymptotic") return CiMethod::asymptotic;
  throw InputError("unknown interval method '" + name + "' (expected laplace or asymptotic)");
}

std::vector<CiBand> pointwise_ci(const FitResult& fitted, const SobolevDesign& design,
                                 const EigenSystem* es, const Vector& points, double level,
                                 CiMethod method) {
  if (!(level >= 0.0 && level < 1.0)) throw InputError("confidence level must lie in [0,1)");
  for (Index g = 0; g < points.size(); ++g) {
    if (!(points(g) >= 0.0 && points(g) <= 1.0)) throw InputError("interval points must lie in [0,1]");
  }
  const VariationalState& state = fitted.state;
  const Index K = state.coeffs.communities();
  const Index G = points.size();
  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));

  std::vector<Matrix> variance(static_cast<std::size_t>(K), Matrix());
  if (method == CiMethod::laplace) {
    const EtaProblem problem = make_eta_problem(design);
    const Index p = problem.parameters();
    const Matrix hinv = inverse_with_jitter(multilogit_hessian(
        problem.features, problem.penalty_weights, state.lambda, to_reduced(state.coeffs, problem)));
    const Matrix rep = representer_features(design, points);  // G x (m + n)
    Matrix b = Matrix::Zero(G, p);
    b.middleCols(1, design.m) = rep.leftCols(design.m);
    b.rightCols(p - 1 - design.m) = rep.rightCols(design.nodes()) * problem.delta_to_c;
    for (Index k = 0; k < K; ++k) {
      const Matrix block = hinv.block(k * p, k * p, p, p);
      variance[static_cast<std::size_t>(k)] = (b * block).cwiseProduct(b).rowwise().sum();
    }
  } else {
    if (!es) throw InputError("asymptotic intervals need the eigen-system");
    const Matrix phi = es->phi_at(points);  // count x G
    const double shrink = es->lambda / double(es->n);
    for (Index k = 0; k < K; ++k) {
      Vector v = Vector::Zero(G);
      for (Index nu = 0; nu < es->size(); ++nu) {
        if (es->community[static_cast<std::size_t>(nu)] != k + 1) continue;
        const double a = 1.0 / (1.0 + shrink * es->rho(nu));
        v += a * a * phi.row(nu).transpose().cwiseAbs2();
      }
      variance[static_cast<std::size_t>(k)] = v / double(es->n);
    }
  }

  std::vector<CiBand> bands;
  for (Index k = 0; k < K; ++k) {
    CiBand band;
    band.community = static_cast<int>(k + 1);
    band.method = method;
    band.t = points;
    band.estimate = beta_at(state.coeffs, design, static_cast<int>(k + 1), points);
    band.sd = variance[static_cast<std::size_t>(k)].col(0).cwiseMax(0.0).cwiseSqrt();
    band.lower = band.estimate - z * band.sd;
    band.upper = band.estimate + z * band.sd;
    bands.push_back(std::move(band));
  }
  return bands;
}

}  // namespace fsbm
