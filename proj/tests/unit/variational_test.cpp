#include <cmath>
#include <random>

#include "doctest.h"
#include "fsbm/functional.hpp"
#include "fsbm/spectral.hpp"
#include "fsbm/variational.hpp"
#include "oracles.hpp"

using namespace fsbm;

namespace {

struct Instance {
  SimulatedData data;
  SobolevDesign design;
};

Instance make_instance(Index n, std::uint64_t seed, double signal = 1.0, double density = 3.0) {
  GenerationConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.block = default_block(n);
  cfg.block.values = (cfg.block.values * density).cwiseMin(0.9);
  cfg.beta0 = [signal](double t) { return quadratic_slope(t, signal); };
  Instance inst{simulate_dataset(cfg), {}};
  inst.design = build_design(inst.data.X, 2);
  return inst;
}

Matrix random_q(Index n, Index classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix q(n, classes);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < classes; ++k) q(i, k) = u(rng);
    q.row(i) /= q.row(i).sum();
  }
  return q;
}

SlopeCoefficients random_coeffs(Index K, Index m, Index n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  SlopeCoefficients c = SlopeCoefficients::zeros(K, m, n);
  for (Index k = 0; k < K; ++k) {
    c.alpha(k) = g(rng);
    for (Index j = 0; j < m; ++j) c.d(k, j) = g(rng);
    for (Index i = 0; i < n; ++i) c.c(k, i) = g(rng);
  }
  return c;
}

// -E_Q[log P(A, Z | X)] + E_Q[log Q] + (lambda/2) J by enumerating every labeling.
double enumerated_objective(const VariationalState& s, const AdjacencyMatrix& A,
                            const SobolevDesign& design) {
  const Index n = s.q.rows(), C = s.q.cols();
  const Matrix R = linear_predictors(s.coeffs, design);
  std::vector<int> z(static_cast<std::size_t>(n), 0);
  double expected_log_p = 0.0;
  while (true) {
    double prob = 1.0, logp = 0.0;
    for (Index i = 0; i < n; ++i) {
      prob *= s.q(i, z[i]);
      double norm = 1.0;
      for (Index k = 1; k < C; ++k) norm += std::exp(R(i, k - 1));
      logp += (z[i] == 0 ? 0.0 : R(i, z[i] - 1)) - std::log(norm);
      for (Index j = i + 1; j < n; ++j) {
        const double b = s.B.values(z[i], z[j]);
        logp += A(i, j) ? std::log(b) : std::log(1 - b);
      }
    }
    expected_log_p += prob * logp;
    Index pos = 0;
    while (pos < n && ++z[static_cast<std::size_t>(pos)] == C) z[static_cast<std::size_t>(pos++)] = 0;
    if (pos == n) break;
  }
  double entropy_term = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < C; ++k)
      if (s.q(i, k) > 0) entropy_term += s.q(i, k) * std::log(s.q(i, k));
  return -expected_log_p + entropy_term + 0.5 * s.lambda * penalty(s.coeffs, design);
}

// Pooled symmetric maximizer written as explicit pair loops.
Matrix brute_force_B(const Matrix& q, const Matrix& a) {
  const Index n = q.rows(), C = q.cols();
  Matrix B(C, C);
  for (Index x = 0; x < C; ++x)
    for (Index y = 0; y < C; ++y) {
      double num = 0.0, den = 0.0;
      for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
          const double w = x == y ? q(i, x) * q(j, y) : q(i, x) * q(j, y) + q(i, y) * q(j, x);
          num += a(i, j) * w;
          den += w;
        }
      B(x, y) = den > 0 ? std::clamp(num / den, 1e-6, 1 - 1e-6) : 1e-6;
    }
  return B;
}

}  // namespace

TEST_SUITE("variational") {

TEST_CASE("objective of the two-node example equals log 2") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = a(1, 0) = 1;
  const AdjacencyMatrix A(a);
  const FunctionalSample X(uniform_grid<double>(10), Matrix::Zero(2, 10));
  const SobolevDesign d = build_design(X, 2);
  VariationalState s{Matrix::Constant(2, 2, 0.5), SlopeCoefficients::zeros(1, 2, 2),
                     BlockMatrix{Matrix::Constant(2, 2, 0.5), {}}, 0.0, {}};
  CHECK(objective(s, A, d) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(objective(s, A, d) == doctest::Approx(enumerated_objective(s, A, d)).epsilon(1e-14));
}

TEST_CASE("objective matches exact enumeration on random small instances") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Index classes = 2 + trial % 2;
    const Instance inst = make_instance(6, 100 + static_cast<std::uint64_t>(trial), 1.0, 30.0);
    Matrix bv = random_q(classes, classes, rng);
    bv = 0.5 * (bv + bv.transpose()).eval();
    VariationalState s{random_q(6, classes, rng), random_coeffs(classes - 1, 2, 6, rng, 0.5),
                       BlockMatrix{bv, {}}, 0.01 * trial, {}};
    CHECK(objective(s, inst.data.A, inst.design) ==
          doctest::Approx(enumerated_objective(s, inst.data.A, inst.design)).epsilon(1e-11));
  }
}

TEST_CASE("penalty enters the objective as lambda/2 J") {
  std::mt19937_64 rng(2);
  const Instance inst = make_instance(20, 1);
  VariationalState s{random_q(20, 2, rng), random_coeffs(1, 2, 20, rng, 1.0),
                     update_B(random_q(20, 2, rng), inst.data.A), 0.0, {}};
  const double base = objective(s, inst.data.A, inst.design);
  s.lambda = 0.3;
  const double with = objective(s, inst.data.A, inst.design);
  s.lambda = 0.6;
  const double doubled = objective(s, inst.data.A, inst.design);
  const double J = penalty(s.coeffs, inst.design);
  CHECK(with - base == doctest::Approx(0.15 * J).epsilon(1e-9));
  CHECK(doubled - with == doctest::Approx(0.15 * J).epsilon(1e-9));
  s.coeffs.c.setZero();
  const double flat0 = objective(s, inst.data.A, inst.design);
  s.lambda = 0.0;
  CHECK(objective(s, inst.data.A, inst.design) == flat0);
}

TEST_CASE("objective reports non-finite terms") {
  const Instance inst = make_instance(10, 1);
  std::mt19937_64 rng(4);
  VariationalState s{random_q(10, 2, rng), SlopeCoefficients::zeros(1, 2, 10),
                     BlockMatrix{Matrix::Constant(2, 2, 0.1), {}}, 0.0, {}};
  s.coeffs.alpha(0) = NAN;
  CHECK_THROWS_AS(objective(s, inst.data.A, inst.design), NumericalError);
}

TEST_CASE("score vanishes at a stationary point and by symmetry") {
  const Instance inst = make_instance(25, 3);
  std::mt19937_64 rng(5);
  SlopeCoefficients c = random_coeffs(2, 2, 25, rng, 0.3);
  c.c.setZero();
  const Matrix W = membership_weights(linear_predictors(c, inst.design));
  CHECK(score_eta(c, inst.design, W, 0.7).cwiseAbs().maxCoeff() < 1e-12);

  const FunctionalSample zero(uniform_grid<double>(20), Matrix::Zero(8, 20));
  const SobolevDesign zd = build_design(zero, 2);
  const Matrix balanced = Matrix::Constant(8, 2, 0.5);
  CHECK(std::abs(score_eta(SlopeCoefficients::zeros(1, 2, 8), zd, balanced, 0.1)(0, 0)) < 1e-15);
}

TEST_CASE("score matches central differences of the eta objective") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Instance inst = make_instance(30, 50 + static_cast<std::uint64_t>(trial));
    const Matrix q = random_q(30, 2, rng);
    const SlopeCoefficients c = random_coeffs(1, 2, 30, rng, 0.5);
    const double lambda = 0.05;
    const Matrix S = score_eta(c, inst.design, q, lambda);
    const double h = 1e-6;
    Vector fd(S.cols());
    for (Index j = 0; j < S.cols(); ++j) {
      SlopeCoefficients up = c, down = c;
      auto bump = [&](SlopeCoefficients& x, double delta) {
        if (j == 0) x.alpha(0) += delta;
        else if (j <= 2) x.d(0, j - 1) += delta;
        else x.c(0, j - 3) += delta;
      };
      bump(up, h);
      bump(down, -h);
      fd(j) = (eta_objective(up, inst.design, q, lambda) - eta_objective(down, inst.design, q, lambda)) / (2 * h);
    }
    const Vector s = S.row(0).transpose();
    CHECK((s - fd).norm() / std::max(1.0, fd.norm()) < 1e-5);
  }
}

TEST_CASE("multilogit Hessian matches differences of the score") {
  std::mt19937_64 rng(12);
  const Instance inst = make_instance(30, 8);
  const EtaProblem prob = make_eta_problem(inst.design);
  const Matrix q = random_q(30, 3, rng);
  Matrix theta = Matrix::Random(prob.parameters(), 2) * 0.3;
  const double lambda = 0.02;
  const Matrix H = multilogit_hessian(prob.features, prob.penalty_weights, lambda, theta);
  const Index p = prob.parameters();
  const double h = 1e-5;
  for (Index col = 0; col < 2 * p; ++col) {
    Matrix up = theta, down = theta;
    up(col % p, col / p) += h;
    down(col % p, col / p) -= h;
    for (Index row = 0; row < 2 * p; row += 3) {
      Matrix e1 = theta, e2 = theta, e3 = theta, e4 = theta;
      const Index r0 = row % p, r1 = row / p;
      e1 = up; e1(r0, r1) += h;
      e2 = up; e2(r0, r1) -= h;
      e3 = down; e3(r0, r1) += h;
      e4 = down; e4(r0, r1) -= h;
      auto f = [&](const Matrix& t) { return multilogit_objective(prob.features, prob.penalty_weights, q, lambda, t); };
      const double second = (f(e1) - f(e2) - f(e3) + f(e4)) / (4 * h * h);
      CHECK(std::abs(second - H(row, col)) < 1e-3 * std::max(1.0, std::abs(H(row, col))));
    }
  }
}

TEST_CASE("eta update: symmetry, heavy shrinkage and a derivative-free oracle") {
  SUBCASE("balanced responsibilities with symmetric covariates give zero intercept") {
    const Instance inst = make_instance(20, 9);
    Matrix values(40, inst.data.X.grid_size());
    values << inst.data.X.values(), -inst.data.X.values();
    const FunctionalSample X(inst.data.X.grid(), values);
    const SobolevDesign d = build_design(X, 2);
    const EtaUpdate u = update_eta(SlopeCoefficients::zeros(1, 2, 40), d, Matrix::Constant(40, 2, 0.5), 1e-3);
    CHECK(u.converged);
    CHECK(std::abs(u.coeffs.alpha(0)) < 1e-6);
  }
  SUBCASE("huge lambda removes the penalized part") {
    const Instance inst = make_instance(40, 10);
    const Matrix q = initial_responsibilities(inst.data.labels, 0.05);
    const EtaUpdate u = update_eta(SlopeCoefficients::zeros(1, 2, 40), inst.design, q, 1e6);
    CHECK(penalty(u.coeffs, inst.design) < 1e-8);
  }
  SUBCASE("Newton agrees with Nelder-Mead") {
    const Instance inst = make_instance(30, 11);
    std::mt19937_64 rng(3);
    const Matrix q = random_q(30, 2, rng);
    const double lambda = 1e-2;
    const EtaUpdate u = update_eta(SlopeCoefficients::zeros(1, 2, 30), inst.design, q, lambda);
    CHECK(u.converged);
    const double newton = eta_objective(u.coeffs, inst.design, q, lambda);
    // Parametrize c over the range of the Gram matrix, computed here from scratch.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(inst.design.xi);
    const double top = eig.eigenvalues().maxCoeff();
    std::vector<Index> keep;
    for (Index j = 0; j < 30; ++j)
      if (eig.eigenvalues()(j) > 1e-9 * top) keep.push_back(j);
    const Index r = static_cast<Index>(keep.size());
    auto unpack = [&](const Eigen::VectorXd& v) {
      SlopeCoefficients c = SlopeCoefficients::zeros(1, 2, 30);
      c.alpha(0) = v(0);
      c.d(0, 0) = v(1);
      c.d(0, 1) = v(2);
      for (Index j = 0; j < r; ++j)
        c.c.row(0) += v(3 + j) / std::sqrt(eig.eigenvalues()(keep[j])) * eig.eigenvectors().col(keep[j]).transpose();
      return c;
    };
    auto f = [&](const Eigen::VectorXd& v) { return eta_objective(unpack(v), inst.design, q, lambda); };
    const Eigen::VectorXd best = oracle::nelder_mead(f, Eigen::VectorXd::Zero(3 + r), 1.0, 20000, 6);
    CHECK(newton <= f(best) + 1e-10);
    CHECK(std::abs(newton - f(best)) < 1e-4);
  }
}

TEST_CASE("B update: identities and brute force") {
  const Instance inst = make_instance(40, 12);
  const Matrix& a = inst.data.A.matrix();
  SUBCASE("one-hot responsibilities give empirical block densities") {
    const Matrix q = initial_responsibilities(inst.data.labels, 0.0);
    const Matrix B = update_B(q, inst.data.A).values;
    double e[2][2] = {{0, 0}, {0, 0}}, pairs[2][2] = {{0, 0}, {0, 0}};
    for (Index i = 0; i < 40; ++i)
      for (Index j = i + 1; j < 40; ++j) {
        const int x = std::min(inst.data.labels[i], inst.data.labels[j]);
        const int y = std::max(inst.data.labels[i], inst.data.labels[j]);
        e[x][y] += a(i, j);
        pairs[x][y] += 1;
      }
    CHECK(B(0, 0) == doctest::Approx(std::max(e[0][0] / pairs[0][0], 1e-6)));
    CHECK(B(0, 1) == doctest::Approx(e[0][1] / pairs[0][1]));
    CHECK(B(1, 0) == B(0, 1));
    CHECK(B(1, 1) == doctest::Approx(e[1][1] / pairs[1][1]));
  }
  SUBCASE("uniform responsibilities give the global density") {
    const Matrix B = update_B(Matrix::Constant(40, 3, 1.0 / 3), inst.data.A).values;
    CHECK(B.isApproxToConstant(inst.data.A.edge_count() / (40.0 * 39 / 2), 1e-12));
  }
  SUBCASE("empty graph clamps") {
    const Matrix B = update_B(Matrix::Constant(10, 2, 0.5), AdjacencyMatrix(Matrix::Zero(10, 10))).values;
    CHECK(B.isApproxToConstant(1e-6));
  }
  SUBCASE("random instances agree with explicit pair loops") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 30; ++trial) {
      const Index n = 3 + static_cast<Index>(rng() % 18);
      const Index classes = 2 + static_cast<Index>(rng() % 3);
      Matrix adj = Matrix::Zero(n, n);
      for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) adj(i, j) = adj(j, i) = (rng() % 3 == 0);
      const Matrix q = random_q(n, classes, rng);
      const Matrix B = update_B(q, AdjacencyMatrix(adj)).values;
      CHECK((B - brute_force_B(q, adj)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("q update") {
  const Instance inst = make_instance(30, 14);
  std::mt19937_64 rng(15);
  SUBCASE("indistinguishable communities give uniform responsibilities") {
    VariationalState s{random_q(30, 3, rng), SlopeCoefficients::zeros(2, 2, 30),
                       BlockMatrix{Matrix::Constant(3, 3, 0.2), {}}, 0.0, {}};
    const Matrix q = update_q(s, inst.data.A, inst.design);
    CHECK(q.isApproxToConstant(1.0 / 3, 1e-12));
  }
  SUBCASE("one node against the displayed coordinate formula") {
    Matrix adj = Matrix::Zero(3, 3);
    adj(0, 1) = adj(1, 0) = 1;
    adj(1, 2) = adj(2, 1) = 1;
    const AdjacencyMatrix A(adj);
    const Matrix B{{0.6, 0.2}, {0.2, 0.4}};
    VariationalState s{Matrix{{0.5, 0.5}, {0.7, 0.3}, {0.1, 0.9}}, SlopeCoefficients::zeros(1, 2, 3),
                       BlockMatrix{B, {}}, 0.0, {}};
    const Matrix R{{0.8}, {-0.2}, {0.1}};
    FitOptions once;
    once.q_max_sweeps = 1;
    const std::vector<Index> active{0};
    const Matrix q = update_q(s, A, R, once, &active);
    double a[2];
    for (int k = 0; k < 2; ++k) {
      a[k] = k == 0 ? 0.0 : R(0, 0);
      for (int j = 1; j < 3; ++j)
        for (int b = 0; b < 2; ++b)
          a[k] += s.q(j, b) * (adj(0, j) * std::log(B(k, b)) + (1 - adj(0, j)) * std::log(1 - B(k, b)));
    }
    const double p1 = 1.0 / (1.0 + std::exp(a[0] - a[1]));
    CHECK(q(0, 1) == doctest::Approx(p1).epsilon(1e-13));
    CHECK(q.bottomRows(2) == s.q.bottomRows(2));
  }
  SUBCASE("rows stay on the simplex") {
    VariationalState s{random_q(30, 2, rng), random_coeffs(1, 2, 30, rng, 0.5),
                       update_B(random_q(30, 2, rng), inst.data.A), 0.0, {}};
    const Matrix q = update_q(s, inst.data.A, inst.design);
    CHECK(q.rowwise().sum().isApproxToConstant(1.0, 1e-12));
    CHECK(q.minCoeff() >= kResponsibilityFloor);
  }
}

TEST_CASE("objective is invariant under community relabeling") {
  std::mt19937_64 rng(16);
  const Instance inst = make_instance(25, 17);
  Matrix bv = random_q(3, 3, rng);
  bv = 0.5 * (bv + bv.transpose()).eval();
  VariationalState s{random_q(25, 3, rng), random_coeffs(2, 2, 25, rng, 0.5), BlockMatrix{bv, {}}, 0.0, {}};
  const double base = objective(s, inst.data.A, inst.design);
  for (const std::vector<int>& perm : {std::vector<int>{1, 0, 2}, std::vector<int>{2, 0, 1}}) {
    const VariationalState p = permute_state(s, perm);
    CHECK(objective(p, inst.data.A, inst.design) == doctest::Approx(base).epsilon(1e-10));
    CHECK(p.q.col(0) == s.q.col(perm[0]));
    CHECK(p.B.values(0, 1) == s.B.values(perm[0], perm[1]));
  }
}

TEST_CASE("fit: monotone trace, argmax labels, recovery rate") {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GenerationConfig cfg;
    cfg.n = 100;
    cfg.seed = seed;
    cfg.block = default_block(100);
    const SimulatedData data = simulate_dataset(cfg);
    const SobolevDesign d = build_design(data.X, 2);
    const CommunityLabels init = approx_kmeans(embed(data.A, 1), 1, 20, seed).labels;
    const FitResult r = fit(data.A, d, 1, 1e-4, initial_responsibilities(init, 0.05));
    for (std::size_t t = 1; t < r.state.objective_trace.size(); ++t)
      CHECK(r.state.objective_trace[t] <= r.state.objective_trace[t - 1] + 1e-8);
    CHECK(r.labels.values() == argmax_labels(r.state.q).values());
    good += clustering_error(r.labels, data.labels) < 0.2 * 100;
  }
  CHECK(good >= 45);
}

TEST_CASE("argmax ties go to the smallest index") {
  const CommunityLabels z = argmax_labels(Matrix{{0.5, 0.5}, {0.2, 0.8}});
  CHECK(z[0] == 0);
  CHECK(z[1] == 1);
}

TEST_CASE("roughness of the fitted slope shrinks as lambda grows under a null slope") {
  const Instance inst = make_instance(120, 18, 0.0, 4.0);
  const Matrix init = initial_responsibilities(inst.data.labels, 0.05);
  double previous = INFINITY;
  for (double lambda : {1e-6, 1e-4, 1e-2, 1.0}) {
    const FitResult r = fit(inst.data.A, inst.design, 1, lambda, init);
    const double J = penalty(r.state.coeffs, inst.design);
    CHECK(J <= previous + 1e-8);
    previous = J;
  }
}

TEST_CASE("fit validates its inputs") {
  const Instance inst = make_instance(20, 19);
  const Matrix init = initial_responsibilities(inst.data.labels, 0.05);
  CHECK_THROWS_AS(fit(inst.data.A, inst.design, 1, -1.0, init), InputError);
  Matrix bad = init;
  bad(0, 0) = 0.9;
  CHECK_THROWS_AS(fit(inst.data.A, inst.design, 1, 1e-4, bad), InputError);
}

}  // TEST_SUITE
