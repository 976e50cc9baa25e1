#pragma once

#include <cstdint>
#include <functional>

#include "fsbm/network.hpp"
#include "fsbm/types.hpp"

namespace fsbm {

/// Trapezoidal quadrature weights on a strictly increasing grid.
template <typename S>
VectorT<S> trapezoid_weights(const VectorT<S>& grid) {
  const Index T = grid.size();
  VectorT<S> w = VectorT<S>::Zero(T);
  for (Index l = 0; l + 1 < T; ++l) {
    const S half = (grid(l + 1) - grid(l)) / S(2);
    w(l) += half;
    w(l + 1) += half;
  }
  return w;
}

template <typename S>
VectorT<S> uniform_grid(Index points) {
  return VectorT<S>::LinSpaced(points, S(0), S(1));
}

/// Throws InputError unless the grid lies in [0,1], is strictly increasing and
/// has at least two points.
void validate_grid(const Vector& grid);

/// n curves observed on a shared grid.
class FunctionalSample {
 public:
  FunctionalSample() = default;
  FunctionalSample(Vector grid, Matrix values);

  Index size() const { return values_.rows(); }
  Index grid_size() const { return grid_.size(); }
  const Vector& grid() const { return grid_; }
  const Matrix& values() const { return values_; }
  const Vector& weights() const { return weights_; }

  FunctionalSample subset(const std::vector<Index>& nodes) const;
  /// Subtracts the cross-node mean curve.
  FunctionalSample centered() const;

 private:
  Vector grid_;
  Matrix values_;
  Vector weights_;
};

/// Trapezoidal approximation of int_0^1 x(t) f(t) dt for curves on `grid`.
double inner_product(const Vector& grid, const Vector& x, const Vector& f);

/// int X_i f for every node at once.
Vector inner_products(const FunctionalSample& X, const Vector& f);

/// Scores zeta_j = (-1)^{j+1} j^{-2} of the five-term covariate expansion.
double expansion_score(int j);
/// phi_1 = 1, phi_j(t) = sqrt(2) cos((j-1) pi t).
double expansion_basis(int j, double t);

/// The quadratic slope used in the simulation design, scaled by tau:
/// tau * (50 (t - 1/2)^2 - 5).
double quadratic_slope(double t, double tau = 1.0);

struct GenerationConfig {
  Index n = 100;
  Index grid_size = 50;
  double alpha0 = 0.1;
  std::function<double(double)> beta0 = [](double t) { return quadratic_slope(t); };
  BlockMatrix block;
  std::uint64_t seed = 0;
  bool center = false;
};

/// Block matrix rho_n [[1.2, 0.3], [0.3, 1.2]] with rho_n = (log n)^1.5 / n.
BlockMatrix default_block(Index n);

/// X_i(t) = sum_{j=1}^5 zeta_j xi_ij phi_j(t), xi_ij ~ Uniform[-sqrt 3, sqrt 3].
FunctionalSample simulate_covariates(const GenerationConfig& cfg);

/// Logistic membership probabilities P(Z_i = 1 | X_i).
Vector membership_probabilities(const FunctionalSample& X, double alpha0, const Vector& beta0);

/// Two-community labels drawn from the logistic membership model.
CommunityLabels assign_labels(const FunctionalSample& X, double alpha0, const Vector& beta0,
                              std::uint64_t seed);

struct SimulatedData {
  FunctionalSample X;
  CommunityLabels labels;
  AdjacencyMatrix A;
  Vector beta0;  // on X.grid()
  double alpha0 = 0.0;
  BlockMatrix block;
};

/// Full synthetic replicate: covariates, labels and edges from independent
/// streams derived from cfg.seed.
SimulatedData simulate_dataset(const GenerationConfig& cfg);

}  // namespace fsbm
