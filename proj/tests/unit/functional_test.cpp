#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fsbm/functional.hpp"
#include "oracles.hpp"

using namespace fsbm;

TEST_SUITE("functional") {

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(validate_grid(Vector{{0.0}}), InputError);
  CHECK_THROWS_AS(validate_grid(Vector{{0.0, 0.5, 0.5}}), InputError);
  CHECK_THROWS_AS(validate_grid(Vector{{-0.1, 0.5}}), InputError);
  CHECK_NOTHROW(validate_grid(Vector{{0.2, 0.9}}));
  Matrix bad(1, 2);
  bad << 1.0, NAN;
  CHECK_THROWS_AS(FunctionalSample(Vector{{0.0, 1.0}}, bad), InputError);
}

TEST_CASE("inner product basics") {
  const Vector grid = uniform_grid<double>(37);
  const Vector ones = Vector::Ones(37);
  CHECK(inner_product(grid, ones, Vector::Zero(37)) == 0.0);
  CHECK(std::abs(inner_product(grid, ones, ones) - 1.0) < 1e-12);
  CHECK_THROWS_AS(inner_product(grid, ones, Vector::Ones(36)), InputError);
}

TEST_CASE("inner product of unit cosine with itself") {
  const Vector grid = uniform_grid<double>(200);
  const Vector f = (std::numbers::pi * grid.array()).cos() * std::sqrt(2.0);
  CHECK(std::abs(inner_product(grid, f, f) - 1.0) < 1e-3);
}

TEST_CASE("trapezoid rule is exact for linear integrands and symmetric") {
  Vector grid{{0.0, 0.1, 0.35, 0.6, 0.61, 1.0}};
  const Vector x = 2.0 * grid.array() - 0.3;
  CHECK(inner_product(grid, x, Vector::Ones(6)) == doctest::Approx(0.7).epsilon(1e-15));
  const Vector y = grid.array().square();
  CHECK(inner_product(grid, x, y) == inner_product(grid, y, x));
}

TEST_CASE("expansion scores and basis") {
  CHECK(expansion_score(1) == 1.0);
  CHECK(expansion_score(2) == -0.25);
  CHECK(expansion_score(3) == doctest::Approx(1.0 / 9.0));
  CHECK(expansion_basis(1, 0.3) == 1.0);
  CHECK(expansion_basis(3, 0.25) == doctest::Approx(std::sqrt(2.0) * std::cos(0.5 * std::numbers::pi)));
  CHECK(quadratic_slope(0.5) == -5.0);
  CHECK(quadratic_slope(0.0, 0.4) == doctest::Approx(0.4 * 7.5));
}

TEST_CASE("default block matrix") {
  const BlockMatrix B = default_block(100);
  const double rho = std::pow(std::log(100.0), 1.5) / 100.0;
  CHECK(*B.rho == doctest::Approx(rho));
  CHECK(B.values(0, 0) == doctest::Approx(1.2 * rho));
  CHECK(B.values(0, 1) == doctest::Approx(0.3 * rho));
}

TEST_CASE("simulated covariates have the stated moments") {
  GenerationConfig cfg;
  cfg.n = 10000;
  cfg.seed = 21;
  const FunctionalSample X = simulate_covariates(cfg);
  CHECK(X.size() == 10000);
  CHECK(X.grid_size() == 50);
  // Recover the uniform scores by projecting on the orthonormal cosine basis with
  // a fine reference rule; on 50 points the trapezoid recovers them to ~1e-3.
  const Vector grid = X.grid();
  Vector phi1 = Vector::Ones(50);
  const Vector projected = inner_products(X, phi1);  // = zeta_1 xi_i1 + O(h^2)
  const double var = (projected.array() - projected.mean()).square().sum() / (10000 - 1);
  CHECK(std::abs(var - 1.0) < 0.05);
  const Vector mean_curve = X.values().colwise().mean();
  CHECK(mean_curve.cwiseAbs().maxCoeff() <= 0.05);
  CHECK(simulate_covariates(cfg).values() == X.values());
}

TEST_CASE("covariate curves lie in the five-term span") {
  GenerationConfig cfg;
  cfg.n = 30;
  cfg.seed = 2;
  const FunctionalSample X = simulate_covariates(cfg);
  Matrix basis(50, 5);
  for (int j = 1; j <= 5; ++j)
    for (Index l = 0; l < 50; ++l) basis(l, j - 1) = expansion_basis(j, X.grid()(l));
  const Matrix coef = basis.colPivHouseholderQr().solve(X.values().transpose());
  CHECK((basis * coef - X.values().transpose()).norm() < 1e-10);
  // Scores divided by zeta_j stay inside [-sqrt 3, sqrt 3].
  for (int j = 0; j < 5; ++j)
    CHECK((coef.row(j).array() / expansion_score(j + 1)).abs().maxCoeff() <= std::sqrt(3.0) + 1e-9);
}

TEST_CASE("label probabilities follow the logistic model") {
  GenerationConfig cfg;
  cfg.n = 20;
  const FunctionalSample X = simulate_covariates(cfg);
  const Vector zero = Vector::Zero(50);
  CHECK(membership_probabilities(X, 0.0, zero).isApproxToConstant(0.5));
  CHECK(membership_probabilities(X, 0.1, zero).isApproxToConstant(std::exp(0.1) / (1 + std::exp(0.1))));
  Vector beta(50);
  for (Index l = 0; l < 50; ++l) beta(l) = quadratic_slope(X.grid()(l));
  const Vector p = membership_probabilities(X, 0.1, beta);
  for (Index i = 0; i < 20; ++i) {
    const Vector xi = X.values().row(i).transpose();
    CHECK(p(i) == doctest::Approx(oracle::logistic(0.1 + inner_product(X.grid(), xi, beta))));
  }
  CHECK_THROWS_AS(membership_probabilities(X, 0.0, Vector::Zero(49)), InputError);
}

TEST_CASE("zero slope gives coin flips at the logistic rate") {
  GenerationConfig cfg;
  cfg.n = 20000;
  cfg.seed = 4;
  const FunctionalSample X = simulate_covariates(cfg);
  const CommunityLabels z = assign_labels(X, 0.1, Vector::Zero(50), 9);
  double ones = 0;
  for (Index i = 0; i < z.size(); ++i) ones += z[i];
  const double p = oracle::logistic(0.1);
  CHECK(std::abs(ones / 20000 - p) < 4 * std::sqrt(p * (1 - p) / 20000));
}

TEST_CASE("dataset simulation is deterministic and consistent") {
  GenerationConfig cfg;
  cfg.n = 60;
  cfg.block = default_block(60);
  cfg.seed = 13;
  const SimulatedData a = simulate_dataset(cfg);
  const SimulatedData b = simulate_dataset(cfg);
  CHECK(a.A.matrix() == b.A.matrix());
  CHECK(a.labels.values() == b.labels.values());
  CHECK(a.X.values() == b.X.values());
  CHECK(a.beta0(0) == doctest::Approx(quadratic_slope(0.0)));
}

TEST_CASE("centering removes the mean curve") {
  GenerationConfig cfg;
  cfg.n = 25;
  const FunctionalSample X = simulate_covariates(cfg).centered();
  CHECK(X.values().colwise().mean().cwiseAbs().maxCoeff() < 1e-14);
}

}  // TEST_SUITE
