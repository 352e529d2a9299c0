#include <gtest/gtest.h>

#include "nonrev/finite_core.hpp"
#include "nonrev/kernel_zoo.hpp"
#include "oracles.hpp"

using namespace nonrev;

namespace {

RingTarget ring12321() { return RingTarget((Vec(5) << 1, 2, 3, 2, 1).finished()); }

Vec random_vec(Eigen::Index n, Philox& rng) {
  Vec f(n);
  for (Eigen::Index i = 0; i < n; ++i) f(i) = rng.normal();
  return f;
}

// mu(x,v) P(x,v; y,w) = mu(y,w) P(y,-w; x,-v), checked entry by entry.
void expect_skewed_detailed_balance(const KernelSystem& s) {
  const Mat& P = s.P.mat();
  for (Eigen::Index z = 0; z < P.rows(); ++z)
    for (Eigen::Index w = 0; w < P.cols(); ++w)
      EXPECT_NEAR(s.mu(z) * P(z, w), s.mu(w) * P(s.Q(w), s.Q(z)), 1e-14) << z << "->" << w;
}

// Random-walk Metropolis on Z_n with symmetric steps +-k, k ~ step_dist.
Mat rw_metropolis(const RingTarget& t, const Vec& step_dist) {
  const Eigen::Index n = t.n();
  Vec pi = t.pi().weights();
  Mat P = Mat::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index k = 1; k <= step_dist.size(); ++k)
      for (int s : {-1, 1}) {
        Eigen::Index y = ((x + s * k) % n + n) % n;
        P(x, y) += 0.5 * step_dist(k - 1) * std::min(1.0, pi(y) / pi(x));
      }
    P(x, x) += 1.0 - P.row(x).sum();
  }
  return P;
}

}  // namespace

// ===========================================================================
// Gustafson ring and metropolized flows

TEST(GustafsonRing, UniformTargetIsRotation) {
  auto s = gustafson_ring(RingTarget(Vec::Ones(6)));
  for (Eigen::Index z = 0; z < 12; ++z) {
    Eigen::Index target = lifted_index(ring_add(lifted_x(z), lifted_v(z), 6), lifted_v(z));
    EXPECT_EQ(s.P(z, target), 1.0);
  }
  expect_skewed_detailed_balance(s);
}

TEST(GustafsonRing, SkewedBalanceAndInvariance) {
  auto s = gustafson_ring(ring12321());
  expect_skewed_detailed_balance(s);
  EXPECT_TRUE(check_invariance(s.P, s.mu));
  EXPECT_TRUE(check_muQ_reversible(s.P, s.mu, s.Q));
}

TEST(AcceptanceRule, StandardRulesValidate) {
  EXPECT_TRUE(AcceptanceRule::metropolis().validate());
  EXPECT_TRUE(AcceptanceRule::barker().validate());
  EXPECT_FALSE(AcceptanceRule::custom("half", [](double r) { return 0.5 * std::min(1.0, r) + 0.1; }).validate());
  EXPECT_FALSE(AcceptanceRule::custom("sqrt", [](double r) { return std::min(1.0, std::sqrt(r)); }).validate());
}

TEST(AcceptanceRule, BarkerSandwich) {
  auto b = AcceptanceRule::barker();
  for (int k = -40; k <= 40; ++k) {
    double r = std::pow(10.0, k / 10.0);
    EXPECT_LE(b(r), std::min(1.0, r));
    EXPECT_GE(b(r), 0.5 * std::min(1.0, r));
  }
}

TEST(FlowMap, RejectsFlowsBreakingTimeReversal) {
  auto Q = velocity_flip(4);
  FlowMap bad;
  for (Eigen::Index z = 0; z < 8; ++z) bad.psi.push_back(lifted_index(ring_add(lifted_x(z), 1, 4), lifted_v(z)));
  EXPECT_THROW(bad.validate(Q), std::invalid_argument);
  EXPECT_NO_THROW(ring_shift_flow(4).validate(Q));
}

TEST(MetropolizedFlow, FlowEqualToXiIsPureFlip) {
  auto t = ring12321();
  auto Q = velocity_flip(5);
  FlowMap xi{Q.perm()};
  for (auto phi : {AcceptanceRule::metropolis(), AcceptanceRule::barker()}) {
    auto P = metropolized_flow_finite(t.lifted_mu(), xi, Q, phi);
    EXPECT_EQ(P.mat(), Q.matrix());
  }
}

TEST(MetropolizedFlow, RingShiftMetropolisIsGustafson) {
  auto t = ring12321();
  auto g = gustafson_ring(t);
  auto P = metropolized_flow_finite(t.lifted_mu(), ring_shift_flow(5), g.Q, AcceptanceRule::metropolis());
  EXPECT_LT((P.mat() - g.P.mat()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MetropolizedFlow, BarkerIsReversibleAndDominated) {
  auto t = ring12321();
  auto mu = t.lifted_mu();
  auto Q = velocity_flip(5);
  auto met = metropolized_flow_finite(mu, ring_shift_flow(5), Q, AcceptanceRule::metropolis());
  auto bar = metropolized_flow_finite(mu, ring_shift_flow(5), Q, AcceptanceRule::barker());
  EXPECT_TRUE(check_muQ_reversible(bar, mu, Q));
  EXPECT_TRUE(check_mu_reversible(reversible_parts(bar, Q).PQ, mu));
  EXPECT_TRUE(dirichlet_dominance_certificate(met, bar, mu, Q, Side::right).holds);
}

TEST(MetropolizedFlow, ZeroMassConvention) {
  EXPECT_EQ(density_ratio(0.0, 0.3), 0.0);
  EXPECT_EQ(density_ratio(0.3, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(density_ratio(0.3, 0.6), 0.5);
}

TEST(ExtraChance, OneStageIsMetropolizedFlow) {
  auto t = ring12321();
  auto Q = velocity_flip(5);
  auto a = extra_chance_finite(t.lifted_mu(), ring_shift_flow(5), Q, 1);
  auto b = metropolized_flow_finite(t.lifted_mu(), ring_shift_flow(5), Q, AcceptanceRule::metropolis());
  EXPECT_LT((a.mat() - b.mat()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExtraChance, UniformTargetNeverFlips) {
  RingTarget t(Vec::Ones(5));
  auto Q = velocity_flip(5);
  for (int K : {1, 2, 3}) {
    auto P = extra_chance_finite(t.lifted_mu(), ring_shift_flow(5), Q, K);
    for (Eigen::Index z = 0; z < 10; ++z) {
      EXPECT_EQ(P(z, Q(z)), 0.0);
      EXPECT_EQ(P(z, ring_shift_flow(5)(z)), 1.0);
    }
  }
}

TEST(ExtraChance, ReversibleAndDirichletMonotoneInK) {
  RingTarget t((Vec(7) << 1, 3, 2, 5, 1, 4, 2).finished());
  auto mu = t.lifted_mu();
  auto Q = velocity_flip(7);
  std::vector<KernelMatrix> PK;
  for (int K = 1; K <= 4; ++K) {
    PK.push_back(extra_chance_finite(mu, ring_shift_flow(7), Q, K));
    EXPECT_TRUE(check_muQ_reversible(PK.back(), mu, Q)) << "K=" << K;
  }
  // On this target a second stage does rescue some rejections.
  EXPECT_GT((PK[1].mat() - PK[0].mat()).cwiseAbs().maxCoeff(), 0.05);
  Philox rng(7, 0);
  for (int i = 0; i < 100; ++i) {
    Vec g = random_vec(14, rng);
    for (int K = 0; K + 1 < 4; ++K) {
      double e1 = dirichlet_form(g, reversible_parts(PK[K], Q).PQ, mu);
      double e2 = dirichlet_form(g, reversible_parts(PK[K + 1], Q).PQ, mu);
      EXPECT_GE(e2, e1 - 1e-14);
    }
  }
}

// ===========================================================================
// Sub-kernels and lifted chains

TEST(SubKernels, SymmetricProposalGivesStandardMH) {
  auto t = ring12321();
  Mat q = 0.5 * (ring_shift_proposal(5, 1) + ring_shift_proposal(5, -1));
  auto s = mh_subkernels(t, q, q);
  EXPECT_EQ(s.T_plus, s.T_minus);
  EXPECT_TRUE(s.check_skewed_balance());
}

TEST(SubKernels, ShiftProposalsSatisfySkewedBalance) {
  auto s = mh_subkernels(ring12321(), ring_shift_proposal(5, 1), ring_shift_proposal(5, -1));
  EXPECT_TRUE(s.check_skewed_balance());
  for (Eigen::Index x = 0; x < 5; ++x)
    for (Eigen::Index y = 0; y < 5; ++y)
      EXPECT_NEAR(s.pi(x) * s.T_plus(x, y), s.pi(y) * s.T_minus(y, x), 1e-15);
}

TEST(SubKernels, UniformTargetHasFullMass) {
  auto s = mh_subkernels(RingTarget(Vec::Ones(5)), ring_shift_proposal(5, 1), ring_shift_proposal(5, -1));
  for (Eigen::Index x = 0; x < 5; ++x) {
    EXPECT_DOUBLE_EQ(s.mass(1, x), 1.0);
    EXPECT_DOUBLE_EQ(s.mass(-1, x), 1.0);
  }
}

TEST(LiftedKernel, MinimalAndMaximalRates) {
  auto s = mh_subkernels(ring12321(), ring_shift_proposal(5, 1), ring_shift_proposal(5, -1));
  Mat lo = SwitchingRate::minimal().table(s), hi = SwitchingRate::maximal().table(s);
  for (Eigen::Index x = 0; x < 5; ++x)
    for (int v : {-1, 1}) {
      EXPECT_DOUBLE_EQ(lo(x, v > 0), std::max(0.0, s.mass(-v, x) - s.mass(v, x)));
      EXPECT_DOUBLE_EQ(hi(x, v > 0), 1.0 - s.mass(v, x));
    }
  auto L = lifted_kernel(s, SwitchingRate::maximal());
  for (Eigen::Index z = 0; z < 10; ++z) EXPECT_NEAR(L.P.mat().row(z).sum(), 1.0, 1e-15);
}

TEST(LiftedKernel, ConvexRateIsMuQReversible) {
  auto s = mh_subkernels(ring12321(), ring_shift_proposal(5, 1), ring_shift_proposal(5, -1));
  for (double th : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    auto L = lifted_kernel(s, SwitchingRate::convex(th));
    expect_skewed_detailed_balance(L);
    EXPECT_TRUE(check_muQ_reversible(L.P, L.mu, L.Q));
    // No move to another position together with a velocity switch.
    for (Eigen::Index z = 0; z < 10; ++z)
      for (Eigen::Index w = 0; w < 10; ++w)
        if (lifted_x(w) != lifted_x(z) && lifted_v(w) != lifted_v(z)) EXPECT_EQ(L.P(z, w), 0.0);
  }
}

TEST(LiftedKernel, RatesBelowMinimalAreRejected) {
  auto s = mh_subkernels(ring12321(), ring_shift_proposal(5, 1), ring_shift_proposal(5, -1));
  Mat tilde = SwitchingRate::minimal().table(s);
  Philox rng(13, 0);
  for (int t = 0; t < 200; ++t) {
    Mat r = tilde;
    Eigen::Index x = static_cast<Eigen::Index>(rng.below(5));
    int col = rng.below(2);
    r(x, col) -= 0.01 + 0.5 * rng.uniform();
    EXPECT_FALSE(check_switching_rate(s, r));
  }
  // Any admissible rate is tilde plus a common nonnegative shift per x.
  for (int t = 0; t < 200; ++t) {
    Mat r = tilde;
    for (Eigen::Index x = 0; x < 5; ++x) {
      double room = 1.0 - std::max(s.mass(1, x), s.mass(-1, x));
      double c = room * rng.uniform();
      r(x, 0) += c;
      r(x, 1) += c;
    }
    EXPECT_TRUE(check_switching_rate(s, r));
    EXPECT_TRUE(((r - tilde).array() >= 0.0).all());
  }
  EXPECT_THROW(lifted_kernel(s, Mat(tilde.array() - 0.2)), std::invalid_argument);
}

TEST(CollapsedKernel, EqualSubKernels) {
  auto t = ring12321();
  Mat q = 0.5 * (ring_shift_proposal(5, 1) + ring_shift_proposal(5, -1));
  auto s = mh_subkernels(t, q, q);
  Mat expect = s.T_plus;
  for (Eigen::Index x = 0; x < 5; ++x) expect(x, x) += 1.0 - s.mass(1, x);
  EXPECT_LT((collapsed_kernel(s).mat() - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CollapsedKernel, DetailedBalanceAndSymmetrizationIdentity) {
  auto s = mh_subkernels(ring12321(), ring_shift_proposal(5, 1), ring_shift_proposal(5, -1));
  auto P = collapsed_kernel(s);
  auto pi = ring12321().pi();
  EXPECT_TRUE(check_mu_reversible(P, pi));
  for (double th : {0.0, 0.5, 1.0}) {
    auto L = lifted_kernel(s, SwitchingRate::convex(th));
    Mat S = 0.5 * (L.P.mat() + adjoint(L.P, L.mu).mat());
    Philox rng(17, 0);
    Vec f = random_vec(5, rng);
    Vec pk = f, sk = lift_observable(f);
    for (int k = 1; k <= 30; ++k) {
      pk = P.mat() * pk;
      sk = S * sk;
      EXPECT_LT((sk - lift_observable(pk)).cwiseAbs().maxCoeff(), 1e-9) << "k=" << k;
    }
  }
}

TEST(GuidedWalk, UnitStepsUniformTargetRotate) {
  auto s = guided_walk_ring(RingTarget(Vec::Ones(7)), Vec::Ones(1));
  for (Eigen::Index x = 0; x < 7; ++x) {
    EXPECT_EQ(s.T_plus(x, ring_add(x, 1, 7)), 1.0);
    EXPECT_EQ(s.T_minus(x, ring_add(x, -1, 7)), 1.0);
  }
}

TEST(GuidedWalk, SkewedBalanceAndRandomWalkCollapse) {
  auto t = ring12321();
  auto s = guided_walk_ring(t, Vec::Ones(1));
  EXPECT_TRUE(s.check_skewed_balance());
  EXPECT_LT((collapsed_kernel(s).mat() - rw_metropolis(t, Vec::Ones(1))).cwiseAbs().maxCoeff(), 1e-15);
  RingTarget t7((Vec(7) << 1, 4, 2, 5, 3, 1, 2).finished());
  Vec q = (Vec(2) << 0.6, 0.4).finished();
  auto s7 = guided_walk_ring(t7, q);
  EXPECT_TRUE(s7.check_skewed_balance());
  EXPECT_LT((collapsed_kernel(s7).mat() - rw_metropolis(t7, q)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(guided_walk_ring(t, (Vec(3) << 0.2, 0.3, 0.5).finished()), std::invalid_argument);
}

TEST(GuidedWalk, VarianceChain) {
  RingTarget t((Vec(7) << 1, 4, 2, 5, 3, 1, 2).finished());
  Vec q = (Vec(2) << 0.6, 0.4).finished();
  auto s = guided_walk_ring(t, q);
  auto lifted = lifted_kernel(s, SwitchingRate::minimal());
  auto grw = lifted_kernel(s, SwitchingRate::maximal());
  KernelMatrix rw(rw_metropolis(t, q));
  Philox rng(19, 0);
  for (int i = 0; i < 20; ++i) {
    Vec f = random_vec(7, rng);
    Vec fl = lift_observable(f);
    for (double l : {0.1, 0.5, 0.9, 0.99}) {
      double a = var_lambda(fl, lifted.P, lifted.mu, l);
      double b = var_lambda(fl, grw.P, grw.mu, l);
      double c = var_lambda(f, rw, t.pi(), l);
      EXPECT_LE(a, b + 1e-9);
      EXPECT_LE(b, c + 1e-9);
      EXPECT_NEAR(c, oracle::var_series(f, rw.mat(), t.pi().weights(), l), 1e-8);
    }
  }
}

// ===========================================================================
// Pair-space chains

TEST(NealPair, TwoStateHalfKernelForbidsBacktracking) {
  Mat T = Mat::Constant(2, 2, 0.5);
  auto s = neal_pair_kernels(KernelMatrix(T), FiniteDistribution::uniform(2));
  // U = T2(x1,y2)/(1-T2(x1,x2)) * min{1,...} = 1 for y2 != x2.
  for (Eigen::Index a = 0; a < 2; ++a)
    for (Eigen::Index b = 0; b < 2; ++b) EXPECT_DOUBLE_EQ(s.M1(a * 2 + b, a * 2 + (1 - b)), 1.0);
}

TEST(NealPair, ReversibilityAndDominance) {
  Philox rng(23, 0);
  for (Eigen::Index n : {3, 4, 5}) {
    auto [T2, pi] = random_positive_reversible(n, rng);
    auto s = neal_pair_kernels(T2, pi);
    EXPECT_TRUE(check_mu_reversible(s.M1, s.mu_pair));
    EXPECT_TRUE(check_mu_reversible(s.M2, s.mu_pair));
    EXPECT_TRUE(check_muQ_reversible(s.P1, s.mu_pair, s.Q_swap));
    EXPECT_TRUE(check_muQ_reversible(s.P2, s.mu_pair, s.Q_swap));
    Mat A = s.Q_swap.left(s.P1.mat()), B = s.Q_swap.left(s.P2.mat());
    for (Eigen::Index z = 0; z < A.rows(); ++z)
      for (Eigen::Index w = 0; w < A.cols(); ++w)
        if (z != w) EXPECT_GE(A(z, w), B(z, w) - 1e-15);
  }
}

TEST(NealPair, FirstCoordinateFollowsSecondOrderChain) {
  Philox rng(29, 0);
  auto [T2, pi] = random_positive_reversible(3, rng);
  auto s = neal_pair_kernels(T2, pi);
  // From (x1,x2) the chain moves to (x2,y2).
  for (Eigen::Index a = 0; a < 3; ++a)
    for (Eigen::Index b = 0; b < 3; ++b)
      for (Eigen::Index c = 0; c < 3; ++c)
        for (Eigen::Index d = 0; d < 3; ++d)
          if (c != b) {
            EXPECT_EQ(s.P2(a * 3 + b, c * 3 + d), 0.0);
            EXPECT_EQ(s.P1(a * 3 + b, c * 3 + d), 0.0);
          }
}

TEST(NealPair, VarianceIdentity) {
  Philox rng(31, 0);
  auto [T2, pi] = random_positive_reversible(3, rng);
  auto s = neal_pair_kernels(T2, pi);
  const double l = 0.5;
  for (int i = 0; i < 10; ++i) {
    Vec f = random_vec(3, rng);
    double vpi = norm2_centered(f, pi);
    for (const KernelMatrix* P : {&s.P1, &s.P2}) {
      double lhs = var_lambda(s.sum(f), *P, s.mu_pair, l);
      double rhs = -(1 - l * l) / l * vpi + (1 + l) * (1 + l) / l * var_lambda(s.first(f), *P, s.mu_pair, l);
      EXPECT_NEAR(lhs, rhs, 1e-9);
    }
  }
}

TEST(NealPair, RejectsDegenerateT2) {
  Mat T = Mat::Identity(2, 2);
  EXPECT_THROW(neal_pair_kernels(KernelMatrix(T), FiniteDistribution::uniform(2)), std::invalid_argument);
}

// ===========================================================================
// 2-cycles

TEST(TwoCycle, EqualKernelsGiveEquality) {
  auto g = gustafson_ring(ring12321());
  auto R = refresh_kernel(5, 0.4);
  Vec f = lift_observable((Vec(5) << 1, -1, 2, 0, 3).finished());
  auto rep = two_cycle_variance_experiment(R, g.P, R, g.P, g.mu, g.Q, f, lambda_grid_005());
  EXPECT_TRUE(rep.pass);
  EXPECT_NEAR(rep.max_violation_cycle, 0.0, 1e-12);
  EXPECT_TRUE(rep.product_checked);
}

TEST(TwoCycle, FlipThenReversiblePartMatchesHomogeneousOrdering) {
  Philox rng(37, 0);
  for (int t = 0; t < 10; ++t) {
    auto pr = random_dominated_pair(8, Side::left, rng);
    auto I = DeterministicInvolution::identity(8);
    KernelMatrix Qk = pr.Q.kernel();
    KernelMatrix S1(pr.Q.left(pr.P1.mat())), S2(pr.Q.left(pr.P2.mat()));
    Vec f = project_symmetric(random_vec(8, rng), pr.Q, 1);
    auto rep = two_cycle_variance_experiment(Qk, S1, Qk, S2, pr.mu, I, f, lambda_grid_005());
    EXPECT_TRUE(rep.pass);
    ASSERT_TRUE(rep.product_checked);
    for (double l : {0.3, 0.8}) {
      double n2 = norm2_centered(f, pr.mu);
      for (const auto* pair : {&pr.P1, &pr.P2}) {
        const KernelMatrix& S = pair == &pr.P1 ? S1 : S2;
        double cyc = var_lambda_cycle(f, Qk, S, pr.mu, l);
        double hom = (2 + l + 1 / l) / 2 * var_lambda(f, *pair, pr.mu, l * l) + (l - 1 / l) / 2 * n2;
        EXPECT_NEAR(cyc, hom, 1e-9);
      }
    }
  }
}

TEST(TwoCycle, ExtraChanceVarianceNonIncreasingInK) {
  RingTarget t((Vec(7) << 1, 3, 2, 5, 1, 4, 2).finished());
  auto mu = t.lifted_mu();
  auto Q = velocity_flip(7);
  auto R = refresh_kernel(7, 0.3);
  std::vector<KernelMatrix> PK;
  for (int K = 1; K <= 3; ++K) PK.push_back(extra_chance_finite(mu, ring_shift_flow(7), Q, K));
  Philox rng(41, 0);
  for (int i = 0; i < 10; ++i) {
    Vec f = lift_observable(random_vec(7, rng));
    for (int K = 0; K < 2; ++K) {
      auto rep = two_cycle_variance_experiment(R, PK[K + 1], R, PK[K], mu, Q, f, lambda_grid_005());
      EXPECT_TRUE(rep.pass) << rep.max_violation_cycle;
      EXPECT_TRUE(rep.product_checked);
    }
  }
}

TEST(TwoCycle, RequiresCertifiedSlots) {
  Philox rng(43, 0);
  auto pr = random_dominated_pair(6, Side::left, rng);
  Vec f = project_symmetric(random_vec(6, rng), pr.Q, 1);
  EXPECT_THROW(two_cycle_variance_experiment(pr.P2, pr.P2, pr.P1, pr.P1, pr.mu, pr.Q, f, {0.5}), std::invalid_argument);
}
