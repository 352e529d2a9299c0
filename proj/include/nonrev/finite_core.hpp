#pragma once
// Exact finite-state analysis of (mu,Q)-reversible kernels.
//
// Conventions: the operator Q of an involution xi acts by (Qf)(z) = f(xi(z)),
// so the matrix products Q*P and P*Q permute rows and columns respectively.
// Inner products are weighted by mu: <f,g>_mu = sum_z mu(z) f(z) g(z).
//
// var_lambda is exposed for lambda in [0,1) only. Whether var_lambda converges
// to the asymptotic variance as lambda -> 1 is problem specific and is not
// decided here.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nonrev/errors.hpp"
#include "nonrev/rng.hpp"

namespace nonrev {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace tol {
inline constexpr double structural = 1e-10;
inline constexpr double solve = 1e-8;
inline constexpr double stochastic = 1e-12;
inline constexpr double psd = 1e-10;
}  // namespace tol

class FiniteDistribution {
 public:
  FiniteDistribution() = default;
  explicit FiniteDistribution(Vec w) : w_(std::move(w)) {
    if (w_.size() == 0) throw std::invalid_argument("FiniteDistribution: empty");
    for (Eigen::Index i = 0; i < w_.size(); ++i) {
      if (!(w_(i) > 0.0) || !std::isfinite(w_(i)))
        throw std::invalid_argument("FiniteDistribution: weights must be strictly positive");
    }
    if (std::abs(w_.sum() - 1.0) > tol::stochastic)
      throw std::invalid_argument("FiniteDistribution: weights must sum to 1");
  }
  // Normalizes positive unnormalized weights.
  static FiniteDistribution from_unnormalized(const Vec& w) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (!(w(i) > 0.0)) throw std::invalid_argument("FiniteDistribution: weights must be strictly positive");
    return FiniteDistribution(w / w.sum());
  }
  static FiniteDistribution uniform(Eigen::Index n) { return FiniteDistribution(Vec::Constant(n, 1.0 / double(n))); }

  Eigen::Index size() const { return w_.size(); }
  const Vec& weights() const { return w_; }
  double operator()(Eigen::Index i) const { return w_(i); }

 private:
  Vec w_;
};

class KernelMatrix {
 public:
  KernelMatrix() = default;
  explicit KernelMatrix(Mat m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() == 0)
      throw std::invalid_argument("KernelMatrix: must be square and non-empty");
    for (Eigen::Index i = 0; i < m_.rows(); ++i) {
      for (Eigen::Index j = 0; j < m_.cols(); ++j) {
        double p = m_(i, j);
        if (!std::isfinite(p) || p < -tol::stochastic || p > 1.0 + tol::stochastic)
          throw std::invalid_argument("KernelMatrix: entry outside [0,1] at row " + std::to_string(i));
      }
      if (std::abs(m_.row(i).sum() - 1.0) > tol::stochastic)
        throw std::invalid_argument("KernelMatrix: row " + std::to_string(i) + " does not sum to 1");
    }
  }
  static KernelMatrix identity(Eigen::Index n) { return KernelMatrix(Mat::Identity(n, n)); }

  Eigen::Index size() const { return m_.rows(); }
  const Mat& mat() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Mat m_;
};

inline KernelMatrix compose(const KernelMatrix& a, const KernelMatrix& b) {
  if (a.size() != b.size()) throw std::invalid_argument("compose: dimension mismatch");
  return KernelMatrix(a.mat() * b.mat());
}

// Convex combination beta*a + (1-beta)*b.
inline KernelMatrix mixture(double beta, const KernelMatrix& a, const KernelMatrix& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mixture: dimension mismatch");
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("mixture: beta outside [0,1]");
  return KernelMatrix(beta * a.mat() + (1.0 - beta) * b.mat());
}

class DeterministicInvolution {
 public:
  DeterministicInvolution() = default;
  explicit DeterministicInvolution(std::vector<Eigen::Index> perm) : perm_(std::move(perm)) {
    const auto n = static_cast<Eigen::Index>(perm_.size());
    for (Eigen::Index z = 0; z < n; ++z) {
      Eigen::Index w = perm_[z];
      if (w < 0 || w >= n) throw std::invalid_argument("DeterministicInvolution: index out of range");
      if (perm_[w] != z) throw std::invalid_argument("DeterministicInvolution: xi o xi != id");
    }
  }
  static DeterministicInvolution identity(Eigen::Index n) {
    std::vector<Eigen::Index> p(n);
    for (Eigen::Index i = 0; i < n; ++i) p[i] = i;
    return DeterministicInvolution(std::move(p));
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(perm_.size()); }
  Eigen::Index operator()(Eigen::Index z) const { return perm_[z]; }
  const std::vector<Eigen::Index>& perm() const { return perm_; }

  Vec apply(const Vec& f) const {
    check_dim(f.size());
    Vec g(f.size());
    for (Eigen::Index z = 0; z < size(); ++z) g(z) = f(perm_[z]);
    return g;
  }
  // Q*M: row z of the result is row xi(z) of M.
  Mat left(const Mat& m) const {
    check_dim(m.rows());
    Mat r(m.rows(), m.cols());
    for (Eigen::Index z = 0; z < size(); ++z) r.row(z) = m.row(perm_[z]);
    return r;
  }
  // M*Q: column z of the result is column xi(z) of M.
  Mat right(const Mat& m) const {
    check_dim(m.cols());
    Mat r(m.rows(), m.cols());
    for (Eigen::Index z = 0; z < size(); ++z) r.col(z) = m.col(perm_[z]);
    return r;
  }
  Mat matrix() const {
    Mat q = Mat::Zero(size(), size());
    for (Eigen::Index z = 0; z < size(); ++z) q(z, perm_[z]) = 1.0;
    return q;
  }
  KernelMatrix kernel() const { return KernelMatrix(matrix()); }

 private:
  void check_dim(Eigen::Index n) const {
    if (n != size()) throw std::invalid_argument("DeterministicInvolution: dimension mismatch");
  }
  std::vector<Eigen::Index> perm_;
};

inline void check_finite(const Vec& f) {
  for (Eigen::Index i = 0; i < f.size(); ++i)
    if (!std::isfinite(f(i))) throw std::invalid_argument("Observable: non-finite entry");
}

inline double mean(const Vec& f, const FiniteDistribution& mu) { return mu.weights().dot(f); }
inline double inner(const Vec& f, const Vec& g, const FiniteDistribution& mu) {
  return (mu.weights().array() * f.array() * g.array()).sum();
}
inline Vec centered(const Vec& f, const FiniteDistribution& mu) {
  return (f.array() - mean(f, mu)).matrix();
}
inline double norm2_centered(const Vec& f, const FiniteDistribution& mu) {
  Vec c = centered(f, mu);
  return inner(c, c, mu);
}

namespace detail {
inline void require_same(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Structural checks

inline bool check_invariance(const KernelMatrix& P, const FiniteDistribution& mu) {
  detail::require_same(P.size(), mu.size(), "check_invariance");
  Vec lhs = P.mat().transpose() * mu.weights();
  return ((lhs - mu.weights()).cwiseAbs().maxCoeff() <= tol::structural);
}

// For a point map, <Qf,Qg>_mu = <f,g>_mu for all f,g is the same as mu(xi(z)) = mu(z).
inline bool check_isometric_involution(const DeterministicInvolution& Q, const FiniteDistribution& mu) {
  detail::require_same(Q.size(), mu.size(), "check_isometric_involution");
  for (Eigen::Index z = 0; z < Q.size(); ++z) {
    if (Q(Q(z)) != z) return false;
    if (std::abs(mu(Q(z)) - mu(z)) > tol::structural * std::max(1.0, mu(z))) return false;
  }
  return true;
}

inline KernelMatrix adjoint(const KernelMatrix& P, const FiniteDistribution& mu) {
  detail::require_same(P.size(), mu.size(), "adjoint");
  if (!check_invariance(P, mu)) throw std::invalid_argument("adjoint: P does not leave mu invariant");
  const Vec& w = mu.weights();
  Mat a = P.mat().transpose();
  for (Eigen::Index z = 0; z < a.rows(); ++z) a.row(z) *= 1.0 / w(z);
  for (Eigen::Index z = 0; z < a.cols(); ++z) a.col(z) *= w(z);
  // Rows sum to 1 up to the invariance residual; absorb it.
  for (Eigen::Index z = 0; z < a.rows(); ++z) a.row(z) /= a.row(z).sum();
  return KernelMatrix(std::move(a));
}

inline bool check_muQ_reversible(const KernelMatrix& P, const FiniteDistribution& mu, const DeterministicInvolution& Q) {
  detail::require_same(P.size(), Q.size(), "check_muQ_reversible");
  if (!check_isometric_involution(Q, mu))
    throw std::invalid_argument("check_muQ_reversible: Q is not a mu-isometric involution");
  if (!check_invariance(P, mu)) return false;
  Mat qpq = Q.right(Q.left(P.mat()));
  return (adjoint(P, mu).mat() - qpq).cwiseAbs().maxCoeff() <= tol::structural;
}

// Detailed balance mu(z)P(z,z') = mu(z')P(z',z).
inline bool check_mu_reversible(const KernelMatrix& P, const FiniteDistribution& mu) {
  detail::require_same(P.size(), mu.size(), "check_mu_reversible");
  Mat flow = mu.weights().asDiagonal() * P.mat();
  return (flow - flow.transpose()).cwiseAbs().maxCoeff() <= tol::structural;
}

struct ReversibleParts {
  KernelMatrix QP;
  KernelMatrix PQ;
};

inline ReversibleParts reversible_parts(const KernelMatrix& P, const DeterministicInvolution& Q) {
  detail::require_same(P.size(), Q.size(), "reversible_parts");
  return {KernelMatrix(Q.left(P.mat())), KernelMatrix(Q.right(P.mat()))};
}

inline Vec project_symmetric(const Vec& f, const DeterministicInvolution& Q, int sign) {
  if (sign != 1 && sign != -1) throw std::invalid_argument("project_symmetric: sign must be +1 or -1");
  Vec qf = Q.apply(f);
  Vec g(f.size());
  // Both members of a pair are computed from the same two operands, so Qg = sign*g holds bitwise.
  for (Eigen::Index z = 0; z < f.size(); ++z) g(z) = 0.5 * (f(z) + sign * qf(z));
  return g;
}

// ---------------------------------------------------------------------------
// Quadratic forms and variances

inline double dirichlet_form(const Vec& f, const KernelMatrix& P, const FiniteDistribution& mu) {
  detail::require_same(P.size(), f.size(), "dirichlet_form");
  detail::require_same(P.size(), mu.size(), "dirichlet_form");
  Vec pf = P.mat() * f;
  return inner(f, f - pf, mu);
}

// 1/2 sum mu(z)P(z,z')(f(z')-f(z))^2; equals dirichlet_form only for mu-reversible P.
inline double dirichlet_form_halfsum(const Vec& f, const KernelMatrix& P, const FiniteDistribution& mu) {
  detail::require_same(P.size(), f.size(), "dirichlet_form_halfsum");
  double s = 0.0;
  for (Eigen::Index z = 0; z < P.size(); ++z)
    for (Eigen::Index w = 0; w < P.size(); ++w) {
      double d = f(w) - f(z);
      s += mu(z) * P(z, w) * d * d;
    }
  return 0.5 * s;
}

namespace detail {
inline void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in [0,1)");
}
inline Vec solve_checked(const Eigen::PartialPivLU<Mat>& lu, const Vec& rhs) {
  Vec x = lu.solve(rhs);
  if (!x.allFinite()) throw NumericalError("resolvent solve produced non-finite values");
  return x;
}
}  // namespace detail

// Factorization of Id - lambda*P, reusable across observables.
class Resolvent {
 public:
  Resolvent(const KernelMatrix& P, const FiniteDistribution& mu, double lambda) : mu_(mu), lambda_(lambda) {
    detail::check_lambda(lambda);
    detail::require_same(P.size(), mu.size(), "Resolvent");
    if (!check_invariance(P, mu)) throw std::invalid_argument("var_lambda: P does not leave mu invariant");
    lu_.compute(Mat::Identity(P.size(), P.size()) - lambda * P.mat());
  }
  double var(const Vec& f) const {
    Vec fb = centered(f, mu_);
    Vec g = detail::solve_checked(lu_, fb);
    return 2.0 * inner(fb, g, mu_) - inner(fb, fb, mu_);
  }
  double lambda() const { return lambda_; }

 private:
  FiniteDistribution mu_;
  double lambda_;
  Eigen::PartialPivLU<Mat> lu_;
};

inline double var_lambda(const Vec& f, const KernelMatrix& P, const FiniteDistribution& mu, double lambda) {
  detail::require_same(P.size(), f.size(), "var_lambda");
  check_finite(f);
  return Resolvent(P, mu, lambda).var(f);
}

// Variance of the chain that alternates P1, P2, P1, ... started at mu.
inline double var_lambda_cycle(const Vec& f, const KernelMatrix& P1, const KernelMatrix& P2,
                               const FiniteDistribution& mu, double lambda) {
  detail::check_lambda(lambda);
  detail::require_same(P1.size(), P2.size(), "var_lambda_cycle");
  detail::require_same(P1.size(), f.size(), "var_lambda_cycle");
  detail::require_same(P1.size(), mu.size(), "var_lambda_cycle");
  if (!check_invariance(P1, mu) || !check_invariance(P2, mu))
    throw std::invalid_argument("var_lambda_cycle: kernels must leave mu invariant");
  const Mat& a = P1.mat();
  const Mat& b = P2.mat();
  const Mat I = Mat::Identity(a.rows(), a.cols());
  const double l2 = lambda * lambda;
  Vec fb = centered(f, mu);
  Eigen::PartialPivLU<Mat> lu12(I - l2 * (a * b));
  Eigen::PartialPivLU<Mat> lu21(I - l2 * (b * a));
  Vec g12 = detail::solve_checked(lu12, fb + lambda * (a * fb));
  Vec g21 = detail::solve_checked(lu21, fb + lambda * (b * fb));
  return inner(fb, g12, mu) + inner(fb, g21, mu) - inner(fb, fb, mu);
}

// ---------------------------------------------------------------------------
// Spectral quantities

inline double spectral_gap_reversible(const KernelMatrix& P, const FiniteDistribution& mu) {
  if (!check_mu_reversible(P, mu)) throw std::invalid_argument("spectral_gap_reversible: P is not mu-reversible");
  const Eigen::Index n = P.size();
  if (n < 2) return 1.0;
  Vec s = mu.weights().cwiseSqrt();
  Vec is = s.cwiseInverse();
  Mat S = s.asDiagonal() * P.mat() * is.asDiagonal();
  S = 0.5 * (S + S.transpose());
  // Orthonormal basis of the complement of sqrt(mu), i.e. of L^2_0(mu) after rescaling.
  Eigen::HouseholderQR<Mat> qr(s);
  Mat full = qr.householderQ() * Mat::Identity(n, n);
  Mat B = full.rightCols(n - 1);
  Eigen::SelfAdjointEigenSolver<Mat> es(B.transpose() * S * B, Eigen::EigenvaluesOnly);
  return 1.0 - es.eigenvalues().maxCoeff();
}

enum class Side { left, right };

struct OrderingCertificate {
  double dominance_matrix_min_eig = 0.0;
  bool holds = false;
  std::optional<Vec> witness;
};

// Symmetric matrix M with <g,Sg>_mu = h^T M h for h = D^{1/2} g.
inline Mat mu_symmetrized(const Mat& S, const FiniteDistribution& mu) {
  Vec s = mu.weights().cwiseSqrt();
  Vec is = s.cwiseInverse();
  Mat a = s.asDiagonal() * S * is.asDiagonal();
  return 0.5 * (a + a.transpose());
}

inline OrderingCertificate psd_certificate(const Mat& S, const FiniteDistribution& mu) {
  Eigen::SelfAdjointEigenSolver<Mat> es(mu_symmetrized(S, mu));
  if (es.info() != Eigen::Success) throw NumericalError("eigen-decomposition failed");
  OrderingCertificate c;
  c.dominance_matrix_min_eig = es.eigenvalues()(0);
  c.holds = c.dominance_matrix_min_eig >= -tol::psd;
  if (!c.holds) {
    Vec h = es.eigenvectors().col(0);
    c.witness = (h.array() / mu.weights().cwiseSqrt().array()).matrix();
  }
  return c;
}

// Certifies E(g,QP1) >= E(g,QP2) (left) or E(g,P1Q) >= E(g,P2Q) (right) for all g.
inline OrderingCertificate dirichlet_dominance_certificate(const KernelMatrix& P1, const KernelMatrix& P2,
                                                           const FiniteDistribution& mu,
                                                           const DeterministicInvolution& Q, Side side) {
  if (!check_muQ_reversible(P1, mu, Q) || !check_muQ_reversible(P2, mu, Q))
    throw std::invalid_argument("dirichlet_dominance_certificate: kernels must be (mu,Q)-reversible");
  Mat S = side == Side::left ? Mat(Q.left(P2.mat()) - Q.left(P1.mat()))
                             : Mat(Q.right(P2.mat()) - Q.right(P1.mat()));
  return psd_certificate(S, mu);
}

inline std::vector<double> lambda_grid_005() {
  std::vector<double> l;
  for (int k = 1; k <= 19; ++k) l.push_back(0.05 * k);
  return l;
}

struct OrderingReport {
  double max_violation_plus = 0.0;   // max of var(P1) - var(P2) over Q-symmetric f
  double max_violation_minus = 0.0;  // max of var(P2) - var(P1) over Q-antisymmetric f
  std::size_t evaluations = 0;
  bool pass = true;
};

// Random observables are drawn i.i.d. standard normal then projected by Pi+ and Pi-.
inline OrderingReport verify_ordering_theorem(const KernelMatrix& P1, const KernelMatrix& P2,
                                              const FiniteDistribution& mu, const DeterministicInvolution& Q,
                                              const std::vector<double>& lambdas, std::size_t trials,
                                              std::uint64_t rng_seed, double tolerance = 1e-9) {
  auto left = dirichlet_dominance_certificate(P1, P2, mu, Q, Side::left);
  auto right = left.holds ? left : dirichlet_dominance_certificate(P1, P2, mu, Q, Side::right);
  if (!left.holds && !right.holds)
    throw std::invalid_argument("verify_ordering_theorem: Dirichlet dominance not certified");

  Philox gen(rng_seed, 0);
  std::vector<Vec> plus, minus;
  for (std::size_t t = 0; t < trials; ++t) {
    Vec f(P1.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = gen.normal();
    plus.push_back(project_symmetric(f, Q, 1));
    minus.push_back(project_symmetric(f, Q, -1));
  }
  OrderingReport rep;
  rep.max_violation_plus = -std::numeric_limits<double>::infinity();
  rep.max_violation_minus = -std::numeric_limits<double>::infinity();
  for (double l : lambdas) {
    Resolvent r1(P1, mu, l), r2(P2, mu, l);
    for (std::size_t t = 0; t < trials; ++t) {
      rep.max_violation_plus = std::max(rep.max_violation_plus, r1.var(plus[t]) - r2.var(plus[t]));
      rep.max_violation_minus = std::max(rep.max_violation_minus, r2.var(minus[t]) - r1.var(minus[t]));
      rep.evaluations += 2;
    }
  }
  rep.pass = rep.max_violation_plus <= tolerance && rep.max_violation_minus <= tolerance;
  return rep;
}

// Finite-lambda consequence of alpha*E(g,QP1) >= E(g,QP2):
//   var_{l'}(f,P1) <= c*var_l(f,P2) - (1-c)*||fbar||^2,  c = 1 - l(1-alpha), l' = l*alpha/c,
// obtained by comparing (1-alpha)Id + alpha*P1 with P2. Reduces to plain ordering at alpha = 1.
struct QuantitativeBound {
  double lhs = 0.0;
  double rhs = 0.0;
  double lambda_prime = 0.0;
  bool holds = false;
};

inline QuantitativeBound quantitative_bound(const KernelMatrix& P1, const KernelMatrix& P2,
                                            const FiniteDistribution& mu, const DeterministicInvolution& Q,
                                            double alpha, const Vec& f, double lambda) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("quantitative_bound: alpha outside (0,1]");
  detail::check_lambda(lambda);
  if ((Q.apply(f) - f).cwiseAbs().maxCoeff() > tol::structural)
    throw std::invalid_argument("quantitative_bound: requires Qf = f");
  if (!check_muQ_reversible(P1, mu, Q) || !check_muQ_reversible(P2, mu, Q))
    throw std::invalid_argument("quantitative_bound: kernels must be (mu,Q)-reversible");
  const Mat I = Mat::Identity(P1.size(), P1.size());
  Mat S = (I - Q.left(P2.mat())) - alpha * (I - Q.left(P1.mat()));
  Mat Sr = (I - Q.right(P2.mat())) - alpha * (I - Q.right(P1.mat()));
  // Hypothesis: alpha*(Id - QP1) - (Id - QP2) is PSD, i.e. -S is PSD.
  bool ok = psd_certificate(-S, mu).holds || psd_certificate(-Sr, mu).holds;
  if (!ok) throw std::invalid_argument("quantitative_bound: hypothesis not certified");
  const double c = 1.0 - lambda * (1.0 - alpha);
  QuantitativeBound b;
  b.lambda_prime = lambda * alpha / c;
  b.lhs = var_lambda(f, P1, mu, b.lambda_prime);
  b.rhs = c * var_lambda(f, P2, mu, lambda) - (1.0 - c) * norm2_centered(f, mu);
  b.holds = b.lhs <= b.rhs + 1e-9;
  return b;
}

inline bool verify_quantitative_remark(const KernelMatrix& P1, const KernelMatrix& P2, const FiniteDistribution& mu,
                                       const DeterministicInvolution& Q, double alpha, const Vec& f, double lambda) {
  return quantitative_bound(P1, P2, mu, Q, alpha, f, lambda).holds;
}

}  // namespace nonrev
