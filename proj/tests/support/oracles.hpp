#pragma once

// Reference computations written independently of the library: closed-form
// Bernoulli polynomials, Simpson quadrature and small brute-force searches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double bernoulli_poly(int j, double t) {
  switch (j) {
    case 0: return 1.0;
    case 1: return t - 0.5;
    case 2: return t * t - t + 1.0 / 6.0;
    case 3: return t * t * t - 1.5 * t * t + 0.5 * t;
    case 4: return t * t * t * t - 2.0 * t * t * t + t * t - 1.0 / 30.0;
    case 5: return std::pow(t, 5) - 2.5 * std::pow(t, 4) + 5.0 / 3.0 * std::pow(t, 3) - t / 6.0;
    case 6:
      return std::pow(t, 6) - 3.0 * std::pow(t, 5) + 2.5 * std::pow(t, 4) - 0.5 * t * t + 1.0 / 42.0;
    default: return NAN;
  }
}

inline double factorial(int j) {
  double f = 1.0;
  for (int r = 2; r <= j; ++r) f *= r;
  return f;
}

inline double scaled_bernoulli(int j, double t) { return bernoulli_poly(j, t) / factorial(j); }

inline double kernel(int m, double s, double t) {
  double diff = s - t;
  diff -= std::floor(diff);
  const double sign = (m % 2 == 1) ? 1.0 : -1.0;
  return scaled_bernoulli(m, s) * scaled_bernoulli(m, t) + sign * scaled_bernoulli(2 * m, diff);
}

// Composite Simpson weights on a uniform grid with an even number of intervals.
inline Eigen::VectorXd simpson_weights(int intervals) {
  Eigen::VectorXd w(intervals + 1);
  const double h = 1.0 / intervals;
  for (int i = 0; i <= intervals; ++i) {
    w(i) = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
  }
  return w * (h / 3.0);
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Max over points of the distance to the nearest of the given centers.
inline double max_radius(const Eigen::MatrixXd& pts, const std::vector<int>& centers) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    double best = INFINITY;
    for (int c : centers) best = std::min(best, (pts.row(i) - pts.row(c)).norm());
    worst = std::max(worst, best);
  }
  return worst;
}

// Optimal k-center radius with centers restricted to data points.
inline double discrete_kcenter_optimum(const Eigen::MatrixXd& pts, int k) {
  const int n = static_cast<int>(pts.rows());
  std::vector<int> pick(static_cast<std::size_t>(n), 0);
  std::fill(pick.end() - k, pick.end(), 1);
  double best = INFINITY;
  do {
    std::vector<int> centers;
    for (int i = 0; i < n; ++i)
      if (pick[static_cast<std::size_t>(i)]) centers.push_back(i);
    best = std::min(best, max_radius(pts, centers));
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

// min over partitions into k groups of the largest within-group diameter.
inline double min_max_diameter(const Eigen::MatrixXd& pts, int k) {
  const int n = static_cast<int>(pts.rows());
  std::vector<int> label(static_cast<std::size_t>(n), 0);
  double best = INFINITY;
  while (true) {
    double worst = 0.0;
    for (int i = 0; i < n && worst < best; ++i)
      for (int j = i + 1; j < n; ++j)
        if (label[i] == label[j]) worst = std::max(worst, (pts.row(i) - pts.row(j)).norm());
    best = std::min(best, worst);
    int pos = 0;
    while (pos < n && ++label[static_cast<std::size_t>(pos)] == k) label[static_cast<std::size_t>(pos++)] = 0;
    if (pos == n) break;
  }
  return best;
}

// Smallest number of disagreements over all relabelings (brute force).
inline int min_disagreements(const std::vector<int>& a, const std::vector<int>& b, int classes) {
  std::vector<int> perm(static_cast<std::size_t>(classes));
  std::iota(perm.begin(), perm.end(), 0);
  int best = static_cast<int>(a.size());
  do {
    int miss = 0;
    for (std::size_t i = 0; i < a.size(); ++i) miss += perm[static_cast<std::size_t>(a[i])] != b[i];
    best = std::min(best, miss);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Nelder-Mead simplex minimizer with restarts from the best vertex.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   Eigen::VectorXd x, double step, int iterations, int restarts) {
  const Eigen::Index d = x.size();
  for (int round = 0; round < restarts; ++round) {
    std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(d + 1), x);
    for (Eigen::Index j = 0; j < d; ++j) v[static_cast<std::size_t>(j + 1)](j) += step;
    std::vector<double> fv(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) fv[i] = f(v[i]);
    for (int it = 0; it < iterations; ++it) {
      std::vector<std::size_t> idx(v.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
      const std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
      for (std::size_t i = 0; i + 1 < idx.size(); ++i) centroid += v[idx[i]];
      centroid /= static_cast<double>(d);
      const Eigen::VectorXd xr = centroid + (centroid - v[worst]);
      const double fr = f(xr);
      if (fr < fv[best]) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - v[worst]);
        const double fe = f(xe);
        if (fe < fr) { v[worst] = xe; fv[worst] = fe; } else { v[worst] = xr; fv[worst] = fr; }
      } else if (fr < fv[second]) {
        v[worst] = xr;
        fv[worst] = fr;
      } else {
        const Eigen::VectorXd xc = centroid + 0.5 * (v[worst] - centroid);
        const double fc = f(xc);
        if (fc < fv[worst]) {
          v[worst] = xc;
          fv[worst] = fc;
        } else {
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (i == best) continue;
            v[i] = v[best] + 0.5 * (v[i] - v[best]);
            fv[i] = f(v[i]);
          }
        }
      }
    }
    const auto it = std::min_element(fv.begin(), fv.end());
    x = v[static_cast<std::size_t>(it - fv.begin())];
    step *= 0.3;
  }
  return x;
}

}  // namespace oracle
