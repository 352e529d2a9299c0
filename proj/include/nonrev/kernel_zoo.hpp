#pragma once
// Finite-state kernel families. The integers are wrapped to the ring Z_n so
// that shift maps stay bijections. States of the lifted space Z_n x {-1,+1}
// are indexed by 2x + (v > 0); the velocity flip is therefore idx ^ 1.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "nonrev/finite_core.hpp"
#include "nonrev/rng.hpp"

namespace nonrev {

inline Eigen::Index lifted_index(Eigen::Index x, int v) { return 2 * x + (v > 0 ? 1 : 0); }
inline Eigen::Index lifted_x(Eigen::Index z) { return z / 2; }
inline int lifted_v(Eigen::Index z) { return (z & 1) ? 1 : -1; }
inline Eigen::Index ring_add(Eigen::Index x, Eigen::Index d, Eigen::Index n) { return ((x + d) % n + n) % n; }

inline DeterministicInvolution velocity_flip(Eigen::Index nx) {
  std::vector<Eigen::Index> p(2 * nx);
  for (Eigen::Index z = 0; z < 2 * nx; ++z) p[z] = z ^ 1;
  return DeterministicInvolution(std::move(p));
}

// f on X lifted to f(x,v) = f(x).
inline Vec lift_observable(const Vec& f) {
  Vec g(2 * f.size());
  for (Eigen::Index z = 0; z < g.size(); ++z) g(z) = f(lifted_x(z));
  return g;
}

struct RingTarget {
  Vec weights;
  explicit RingTarget(Vec w) : weights(std::move(w)) {
    if (weights.size() < 3) throw std::invalid_argument("RingTarget: need n >= 3");
    for (Eigen::Index i = 0; i < weights.size(); ++i)
      if (!(weights(i) > 0.0)) throw std::invalid_argument("RingTarget: weights must be positive");
  }
  Eigen::Index n() const { return weights.size(); }
  FiniteDistribution pi() const { return FiniteDistribution::from_unnormalized(weights); }
  FiniteDistribution lifted_mu() const {
    Vec p = pi().weights();
    Vec m(2 * n());
    for (Eigen::Index z = 0; z < m.size(); ++z) m(z) = 0.5 * p(lifted_x(z));
    return FiniteDistribution(m / m.sum());
  }
};

struct KernelSystem {
  KernelMatrix P;
  FiniteDistribution mu;
  DeterministicInvolution Q;
};

// ---------------------------------------------------------------------------
// Acceptance rules and flows

struct AcceptanceRule {
  std::string kind;
  std::function<double(double)> phi;

  double operator()(double r) const { return phi(r); }

  static AcceptanceRule metropolis() {
    return {"metropolis", [](double r) { return std::min(1.0, r); }};
  }
  static AcceptanceRule barker() {
    return {"barker", [](double r) { return std::isinf(r) ? 1.0 : r / (1.0 + r); }};
  }
  static AcceptanceRule custom(std::string name, std::function<double(double)> f) {
    return {std::move(name), std::move(f)};
  }

  // r*phi(1/r) = phi(r) on a log grid, phi(0) = 0 and phi <= min{1,r}.
  bool validate() const {
    if (phi(0.0) != 0.0) return false;
    for (int k = -60; k <= 60; ++k) {
      double r = std::pow(10.0, k / 10.0);
      double a = phi(r), b = r * phi(1.0 / r);
      if (!(a >= 0.0 && a <= 1.0)) return false;
      if (std::abs(a - b) > 1e-12 * std::max(1.0, a)) return false;
      if (a > std::min(1.0, r) * (1.0 + 1e-15)) return false;
    }
    return true;
  }
};

struct FlowMap {
  std::vector<Eigen::Index> psi;

  Eigen::Index operator()(Eigen::Index z) const { return psi[z]; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(psi.size()); }

  // psi must be a bijection with psi^{-1} = xi o psi o xi.
  void validate(const DeterministicInvolution& Q) const {
    if (size() != Q.size()) throw std::invalid_argument("FlowMap: dimension mismatch");
    std::vector<char> hit(psi.size(), 0);
    for (auto w : psi) {
      if (w < 0 || w >= size() || hit[w]) throw std::invalid_argument("FlowMap: not a bijection");
      hit[w] = 1;
    }
    for (Eigen::Index z = 0; z < size(); ++z)
      if (psi[Q(psi[Q(z)])] != z) throw std::invalid_argument("FlowMap: psi^{-1} != xi o psi o xi");
  }
  Eigen::Index power(Eigen::Index z, int k) const {
    for (int i = 0; i < k; ++i) z = psi[z];
    return z;
  }
};

// psi(x,v) = (x+v, v) on the lifted ring.
inline FlowMap ring_shift_flow(Eigen::Index nx) {
  FlowMap f;
  f.psi.resize(2 * nx);
  for (Eigen::Index z = 0; z < 2 * nx; ++z) {
    int v = lifted_v(z);
    f.psi[z] = lifted_index(ring_add(lifted_x(z), v, nx), v);
  }
  return f;
}

// mu(target)/mu(z), with 0 when either mass vanishes.
inline double density_ratio(double num, double den) { return (num > 0.0 && den > 0.0) ? num / den : 0.0; }

inline KernelMatrix metropolized_flow_finite(const FiniteDistribution& mu, const FlowMap& psi,
                                             const DeterministicInvolution& Q, const AcceptanceRule& phi) {
  psi.validate(Q);
  const Eigen::Index n = mu.size();
  Mat P = Mat::Zero(n, n);
  for (Eigen::Index z = 0; z < n; ++z) {
    double a = phi(density_ratio(mu(Q(psi(z))), mu(z)));
    P(z, psi(z)) += a;
    P(z, Q(z)) += 1.0 - a;
  }
  return KernelMatrix(std::move(P));
}

inline KernelMatrix extra_chance_finite(const FiniteDistribution& mu, const FlowMap& psi,
                                        const DeterministicInvolution& Q, int K) {
  if (K < 1) throw std::invalid_argument("extra_chance_finite: K >= 1 required");
  psi.validate(Q);
  const Eigen::Index n = mu.size();
  Mat P = Mat::Zero(n, n);
  for (Eigen::Index z = 0; z < n; ++z) {
    double alpha = 0.0;
    Eigen::Index y = z;
    for (int k = 1; k <= K; ++k) {
      y = psi(y);
      double next = std::max(alpha, std::min(1.0, density_ratio(mu(Q(y)), mu(z))));
      P(z, y) += next - alpha;
      alpha = next;
    }
    P(z, Q(z)) += 1.0 - alpha;
  }
  return KernelMatrix(std::move(P));
}

inline KernelSystem gustafson_ring(const RingTarget& target) {
  const Eigen::Index nx = target.n();
  Vec pi = target.pi().weights();
  Mat P = Mat::Zero(2 * nx, 2 * nx);
  for (Eigen::Index x = 0; x < nx; ++x) {
    for (int v : {-1, 1}) {
      Eigen::Index y = ring_add(x, v, nx);
      double a = std::min(1.0, pi(y) / pi(x));
      P(lifted_index(x, v), lifted_index(y, v)) += a;
      P(lifted_index(x, v), lifted_index(x, -v)) += 1.0 - a;
    }
  }
  return {KernelMatrix(std::move(P)), target.lifted_mu(), velocity_flip(nx)};
}

// Velocity refreshment on X x {-1,1}: keep v with probability a, flip otherwise.
inline KernelMatrix refresh_kernel(Eigen::Index nx, double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("refresh_kernel: a outside [0,1]");
  Mat P = Mat::Zero(2 * nx, 2 * nx);
  for (Eigen::Index z = 0; z < 2 * nx; ++z) {
    P(z, z) += a;
    P(z, z ^ 1) += 1.0 - a;
  }
  return KernelMatrix(std::move(P));
}

// ---------------------------------------------------------------------------
// Lifted chains built from sub-kernels

struct SubKernelPair {
  Mat T_plus;
  Mat T_minus;
  Vec pi;

  const Mat& T(int v) const { return v > 0 ? T_plus : T_minus; }
  Eigen::Index n() const { return T_plus.rows(); }
  double mass(int v, Eigen::Index x) const { return T(v).row(x).sum(); }

  // pi(x)T_+(x,y) = pi(y)T_-(y,x) and row sums in [0,1].
  bool check_skewed_balance(double tol = tol::structural) const {
    for (Eigen::Index x = 0; x < n(); ++x) {
      for (int v : {-1, 1}) {
        double m = mass(v, x);
        if (m > 1.0 + tol::stochastic || T(v).row(x).minCoeff() < 0.0) return false;
      }
      for (Eigen::Index y = 0; y < n(); ++y)
        if (std::abs(pi(x) * T_plus(x, y) - pi(y) * T_minus(y, x)) > tol) return false;
    }
    return true;
  }
};

inline SubKernelPair mh_subkernels(const RingTarget& target, const Mat& q_plus, const Mat& q_minus) {
  const Eigen::Index n = target.n();
  if (q_plus.rows() != n || q_minus.rows() != n || q_plus.cols() != n || q_minus.cols() != n)
    throw std::invalid_argument("mh_subkernels: proposal dimension mismatch");
  for (Eigen::Index x = 0; x < n; ++x)
    if (std::abs(q_plus.row(x).sum() - 1.0) > tol::stochastic || std::abs(q_minus.row(x).sum() - 1.0) > tol::stochastic)
      throw std::invalid_argument("mh_subkernels: proposals must be row-stochastic");
  Vec pi = target.pi().weights();
  SubKernelPair s{Mat::Zero(n, n), Mat::Zero(n, n), pi};
  for (int v : {-1, 1}) {
    const Mat& q = v > 0 ? q_plus : q_minus;
    const Mat& qr = v > 0 ? q_minus : q_plus;
    Mat& T = v > 0 ? s.T_plus : s.T_minus;
    for (Eigen::Index x = 0; x < n; ++x)
      for (Eigen::Index y = 0; y < n; ++y) {
        double r = density_ratio(pi(y) * qr(y, x), pi(x) * q(x, y));
        T(x, y) = std::min(1.0, r) * q(x, y);
      }
  }
  return s;
}

// Deterministic shift proposal x -> x + d on Z_n.
inline Mat ring_shift_proposal(Eigen::Index n, Eigen::Index d) {
  Mat q = Mat::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x) q(x, ring_add(x, d, n)) = 1.0;
  return q;
}

enum class SwitchingKind { minimal, maximal, convex };

struct SwitchingRate {
  SwitchingKind kind = SwitchingKind::minimal;
  double theta = 0.0;

  static SwitchingRate minimal() { return {SwitchingKind::minimal, 0.0}; }
  static SwitchingRate maximal() { return {SwitchingKind::maximal, 1.0}; }
  static SwitchingRate convex(double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("SwitchingRate: theta outside [0,1]");
    return {SwitchingKind::convex, theta};
  }

  // rho_{v,-v}(x), stored as an n x 2 table (column 0: v = -1, column 1: v = +1).
  Mat table(const SubKernelPair& s) const {
    Mat r(s.n(), 2);
    for (Eigen::Index x = 0; x < s.n(); ++x)
      for (int v : {-1, 1}) {
        double tilde = std::max(0.0, s.mass(-v, x) - s.mass(v, x));
        double top = 1.0 - s.mass(v, x);
        double t = kind == SwitchingKind::minimal ? 0.0 : kind == SwitchingKind::maximal ? 1.0 : theta;
        r(x, v > 0) = (1.0 - t) * tilde + t * top;
      }
    return r;
  }
};

// Bounds 0 <= rho <= 1 - T_v(x,X) and rho_{v,-v} - rho_{-v,v} = T_{-v}(x,X) - T_v(x,X).
inline bool check_switching_rate(const SubKernelPair& s, const Mat& rho) {
  for (Eigen::Index x = 0; x < s.n(); ++x) {
    for (int v : {-1, 1}) {
      double r = rho(x, v > 0);
      if (r < -tol::structural || r > 1.0 - s.mass(v, x) + tol::structural) return false;
    }
    double lhs = rho(x, 1) - rho(x, 0);
    double rhs = s.mass(-1, x) - s.mass(1, x);
    if (std::abs(lhs - rhs) > tol::structural) return false;
  }
  return true;
}

inline KernelSystem lifted_kernel(const SubKernelPair& s, const Mat& rho) {
  if (!check_switching_rate(s, rho)) throw std::invalid_argument("lifted_kernel: switching rate violates its bounds");
  const Eigen::Index n = s.n();
  Mat P = Mat::Zero(2 * n, 2 * n);
  for (Eigen::Index x = 0; x < n; ++x)
    for (int v : {-1, 1}) {
      Eigen::Index z = lifted_index(x, v);
      for (Eigen::Index y = 0; y < n; ++y) P(z, lifted_index(y, v)) += s.T(v)(x, y);
      double r = std::max(0.0, rho(x, v > 0));
      P(z, z) += std::max(0.0, 1.0 - s.mass(v, x) - r);
      P(z, z ^ 1) += r;
    }
  Vec m(2 * n);
  for (Eigen::Index z = 0; z < 2 * n; ++z) m(z) = 0.5 * s.pi(lifted_x(z));
  return {KernelMatrix(std::move(P)), FiniteDistribution(m / m.sum()), velocity_flip(n)};
}

inline KernelSystem lifted_kernel(const SubKernelPair& s, const SwitchingRate& rho) {
  return lifted_kernel(s, rho.table(s));
}

inline KernelMatrix collapsed_kernel(const SubKernelPair& s) {
  Mat P = 0.5 * (s.T_plus + s.T_minus);
  for (Eigen::Index x = 0; x < s.n(); ++x) P(x, x) += 1.0 - 0.5 * s.mass(1, x) - 0.5 * s.mass(-1, x);
  return KernelMatrix(std::move(P));
}

// step_dist(k-1) is the probability that |z| = k, k = 1..m.
inline SubKernelPair guided_walk_ring(const RingTarget& target, const Vec& step_dist) {
  const Eigen::Index n = target.n(), m = step_dist.size();
  if (m < 1 || 2 * m >= n) throw std::invalid_argument("guided_walk_ring: need 1 <= m < n/2");
  if (std::abs(step_dist.sum() - 1.0) > tol::stochastic || step_dist.minCoeff() < 0.0)
    throw std::invalid_argument("guided_walk_ring: step_dist must be a distribution");
  Vec pi = target.pi().weights();
  SubKernelPair s{Mat::Zero(n, n), Mat::Zero(n, n), pi};
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index k = 1; k <= m; ++k) {
      for (int v : {-1, 1}) {
        Eigen::Index y = ring_add(x, v * k, n);
        (v > 0 ? s.T_plus : s.T_minus)(x, y) += step_dist(k - 1) * std::min(1.0, pi(y) / pi(x));
      }
    }
  return s;
}

// ---------------------------------------------------------------------------
// Second-order chains on pairs (x1, x2), indexed x1*n + x2.

struct NealSystem {
  KernelMatrix P1, P2;
  KernelMatrix M1, M2;
  FiniteDistribution mu_pair;
  DeterministicInvolution Q_swap;
  Eigen::Index n;

  // f(x1) as a function of the pair.
  Vec first(const Vec& f) const {
    Vec g(n * n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) g(a * n + b) = f(a);
    return g;
  }
  // f(x1) + f(x2).
  Vec sum(const Vec& f) const {
    Vec g(n * n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) g(a * n + b) = f(a) + f(b);
    return g;
  }
};

inline NealSystem neal_pair_kernels(const KernelMatrix& T2, const FiniteDistribution& pi) {
  const Eigen::Index n = T2.size();
  if (pi.size() != n) throw std::invalid_argument("neal_pair_kernels: dimension mismatch");
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      if (!(T2(a, b) > 0.0 && T2(a, b) < 1.0))
        throw std::invalid_argument("neal_pair_kernels: T2 entries must lie in (0,1)");
  if (!check_mu_reversible(T2, pi)) throw std::invalid_argument("neal_pair_kernels: T2 must be pi-reversible");

  const Eigen::Index N = n * n;
  Vec m(N);
  std::vector<Eigen::Index> swap(N);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      m(a * n + b) = pi(a) * T2(a, b);
      swap[a * n + b] = b * n + a;
    }
  // Symmetrize the masses so that rounding cannot break swap invariance.
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b) {
      double s = 0.5 * (m(a * n + b) + m(b * n + a));
      m(a * n + b) = m(b * n + a) = s;
    }
  FiniteDistribution mu(m / m.sum());
  DeterministicInvolution Q(std::move(swap));

  Mat M1 = Mat::Zero(N, N), M2 = Mat::Zero(N, N);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      Eigen::Index z = a * n + b;
      double stay = 1.0;
      for (Eigen::Index c = 0; c < n; ++c) {
        M2(z, a * n + c) = T2(a, c);
        if (c == b) continue;
        double u = T2(a, c) / (1.0 - T2(a, b)) * std::min(1.0, (1.0 - T2(a, b)) / (1.0 - T2(a, c)));
        M1(z, a * n + c) = u;
        stay -= u;
      }
      M1(z, z) += stay;
    }
  KernelMatrix k1(M1), k2(M2);
  return {KernelMatrix(Q.left(M1)), KernelMatrix(Q.left(M2)), k1, k2, mu, Q, n};
}

// ---------------------------------------------------------------------------
// 2-cycles

struct TwoCycleReport {
  double max_violation_cycle = 0.0;
  bool product_checked = false;
  double max_violation_product = 0.0;
  bool pass = true;
};

inline bool dominance_both_slots(const KernelMatrix& A1, const KernelMatrix& A2, const KernelMatrix& B1,
                                 const KernelMatrix& B2, const FiniteDistribution& mu,
                                 const DeterministicInvolution& Q) {
  for (Side s : {Side::left, Side::right})
    if (dirichlet_dominance_certificate(A1, B1, mu, Q, s).holds &&
        dirichlet_dominance_certificate(A2, B2, mu, Q, s).holds)
      return true;
  return false;
}

// Compares the cycles {P11,P12} and {P21,P22} for a Q-symmetric f.
inline TwoCycleReport two_cycle_variance_experiment(const KernelMatrix& P11, const KernelMatrix& P12,
                                                    const KernelMatrix& P21, const KernelMatrix& P22,
                                                    const FiniteDistribution& mu, const DeterministicInvolution& Q,
                                                    const Vec& f, const std::vector<double>& lambdas,
                                                    double tolerance = 1e-9) {
  if ((Q.apply(f) - f).cwiseAbs().maxCoeff() > tol::structural)
    throw std::invalid_argument("two_cycle_variance_experiment: requires Qf = f");
  if (!dominance_both_slots(P11, P12, P21, P22, mu, Q))
    throw std::invalid_argument("two_cycle_variance_experiment: Dirichlet dominance not certified");
  TwoCycleReport rep;
  rep.max_violation_cycle = -std::numeric_limits<double>::infinity();
  Vec fb = centered(f, mu);
  bool fixed = (P11.mat() * fb - fb).cwiseAbs().maxCoeff() <= tol::structural &&
               (P21.mat() * fb - fb).cwiseAbs().maxCoeff() <= tol::structural;
  KernelMatrix prod1 = compose(P11, P12), prod2 = compose(P21, P22);
  rep.product_checked = fixed;
  rep.max_violation_product = fixed ? -std::numeric_limits<double>::infinity() : 0.0;
  for (double l : lambdas) {
    rep.max_violation_cycle = std::max(rep.max_violation_cycle,
                                       var_lambda_cycle(f, P11, P12, mu, l) - var_lambda_cycle(f, P21, P22, mu, l));
    if (fixed)
      rep.max_violation_product =
          std::max(rep.max_violation_product, var_lambda(f, prod1, mu, l) - var_lambda(f, prod2, mu, l));
  }
  rep.pass = rep.max_violation_cycle <= tolerance && rep.max_violation_product <= tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Random instances

// Random mu-preserving involution on n states and a mu with mu(xi z) = mu(z).
inline std::pair<FiniteDistribution, DeterministicInvolution> random_involution(Eigen::Index n, Philox& rng,
                                                                               bool trivial = false) {
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (Eigen::Index i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(std::uint64_t(i) + 1)]);
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  if (!trivial) {
    Eigen::Index pairs = n / 2 - static_cast<Eigen::Index>(rng.below(std::uint64_t(n / 4) + 1));
    for (Eigen::Index p = 0; p < pairs; ++p) {
      perm[order[2 * p]] = order[2 * p + 1];
      perm[order[2 * p + 1]] = order[2 * p];
    }
  }
  Vec w(n);
  for (Eigen::Index z = 0; z < n; ++z) w(z) = 0.5 + rng.uniform();
  for (Eigen::Index z = 0; z < n; ++z)
    if (perm[z] > z) w(perm[z]) = w(z);
  return {FiniteDistribution(w / w.sum()), DeterministicInvolution(std::move(perm))};
}

// Symmetric random flow F (zero diagonal, some zero entries), scaled so that
// the off-diagonal mass of F(a,.)/mu(a) stays below `budget(a)`.
inline Mat random_flow(const FiniteDistribution& mu, const Vec& budget, Philox& rng, double density = 0.7) {
  const Eigen::Index n = mu.size();
  Mat F = Mat::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b)
      if (rng.uniform() < density) F(a, b) = F(b, a) = rng.uniform();
  double scale = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < n; ++a) {
    double out = F.row(a).sum() / mu(a);
    if (out > 0.0) scale = std::min(scale, budget(a) / out);
  }
  if (!std::isfinite(scale)) scale = 0.0;
  return F * scale;
}

inline Mat flow_to_kernel(const Mat& F, const FiniteDistribution& mu) {
  Mat S = F;
  for (Eigen::Index a = 0; a < S.rows(); ++a) S.row(a) /= mu(a);
  for (Eigen::Index a = 0; a < S.rows(); ++a) S(a, a) = 0.0;
  for (Eigen::Index a = 0; a < S.rows(); ++a) S(a, a) = 1.0 - S.row(a).sum();
  return S;
}

struct DominatedPair {
  KernelMatrix P1, P2;  // P1 dominates: E(g,QP1) >= E(g,QP2) (left) or E(g,P1Q) >= E(g,P2Q) (right)
  FiniteDistribution mu;
  DeterministicInvolution Q;
  Side side;
};

// P_i = Q S_i (left) or S_i Q (right) with S_2 mu-reversible and S_1 = S_2 plus a
// nonnegative symmetric flow, so E(g,S_1) - E(g,S_2) = 1/2 sum w_ab (g_a - g_b)^2.
inline DominatedPair random_dominated_pair(Eigen::Index n, Side side, Philox& rng, bool trivial_q = false) {
  auto [mu, Q] = random_involution(n, rng, trivial_q);
  Vec budget = Vec::Constant(n, 0.3 + 0.4 * rng.uniform());
  Mat S2 = flow_to_kernel(random_flow(mu, budget, rng), mu);
  Vec room = 0.9 * S2.diagonal();
  Mat W = random_flow(mu, room, rng, 0.5);
  Mat S1 = flow_to_kernel(W + mu.weights().asDiagonal() * (S2 - Mat(S2.diagonal().asDiagonal())), mu);
  auto wrap = [&](const Mat& S) { return KernelMatrix(side == Side::left ? Q.left(S) : Q.right(S)); };
  return {wrap(S1), wrap(S2), mu, Q, side};
}

// pi-reversible T2 with all entries strictly inside (0,1).
inline std::pair<KernelMatrix, FiniteDistribution> random_positive_reversible(Eigen::Index n, Philox& rng) {
  Mat F(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a; b < n; ++b) F(a, b) = F(b, a) = 0.2 + rng.uniform();
  Vec rows = F.rowwise().sum();
  Mat T = F;
  for (Eigen::Index a = 0; a < n; ++a) T.row(a) /= rows(a);
  return {KernelMatrix(T), FiniteDistribution(rows / rows.sum())};
}

}  // namespace nonrev
