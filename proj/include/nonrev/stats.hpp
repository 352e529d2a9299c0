#pragma once
// Small statistics and quadrature toolkit shared by the Monte Carlo modules.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace nonrev::stats {

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

inline MeanSE mean_se(const std::vector<double>& x) {
  MeanSE r;
  r.n = x.size();
  if (x.empty()) return r;
  double m = 0.0;
  for (double v : x) m += v;
  m /= double(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  r.mean = m;
  r.sd = x.size() > 1 ? std::sqrt(s / double(x.size() - 1)) : 0.0;
  r.se = r.sd / std::sqrt(double(x.size()));
  return r;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

// log(1 - Phi(z)), accurate in both tails.
inline double log_normal_sf(double z) {
  if (z < 30.0) return std::log(0.5 * std::erfc(z * std::numbers::sqrt2 / 2.0));
  // Mills ratio continued to a few terms; relative error below 1e-12 for z >= 30.
  double z2 = z * z;
  double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - std::log(z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

// sup_t |F_n(t) - F(t)| for a continuous reference CDF.
inline double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double F = cdf(x[i]);
    d = std::max({d, double(i + 1) / n - F, F - double(i) / n});
  }
  return d;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = double(a.size()), nb = double(b.size());
  while (i < a.size() && j < b.size()) {
    double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(double(i) / na - double(j) / nb));
  }
  return d;
}

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights mu0 * v0^2.
inline Quadrature golub_welsch(const Eigen::VectorXd& offdiag, double mu0) {
  const Eigen::Index n = offdiag.size() + 1;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k + 1 < n; ++k) J(k, k + 1) = J(k + 1, k) = offdiag(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  for (Eigen::Index k = 0; k < n; ++k) {
    q.nodes.push_back(es.eigenvalues()(k));
    double v = es.eigenvectors()(0, k);
    q.weights.push_back(mu0 * v * v);
  }
  return q;
}

// Probabilists' Gauss-Hermite: integrates against N(0,1), weights sum to 1.
inline Quadrature gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n >= 1");
  if (n == 1) return {{0.0}, {1.0}};
  Eigen::VectorXd b(n - 1);
  for (int k = 1; k < n; ++k) b(k - 1) = std::sqrt(double(k));
  return golub_welsch(b, 1.0);
}

// Gauss-Legendre on [-1,1].
inline Quadrature gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1");
  if (n == 1) return {{0.0}, {2.0}};
  Eigen::VectorXd b(n - 1);
  for (int k = 1; k < n; ++k) b(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  return golub_welsch(b, 2.0);
}

// Batch-means estimate of the asymptotic variance of a time average from a
// sequence of equal-length batch integrals' means. `batch_len` is in time units.
inline double batch_means_variance(const std::vector<double>& batch_means, double batch_len) {
  if (batch_means.size() < 2) throw std::invalid_argument("batch_means_variance: need >= 2 batches");
  MeanSE m = mean_se(batch_means);
  return batch_len * m.sd * m.sd;
}

}  // namespace nonrev::stats
