#include <gtest/gtest.h>

#include "nonrev/finite_core.hpp"
#include "nonrev/kernel_zoo.hpp"
#include "oracles.hpp"

using namespace nonrev;

namespace {

KernelMatrix two_state(double p) {
  Mat m(2, 2);
  m << 1 - p, p, p, 1 - p;
  return KernelMatrix(m);
}

KernelMatrix cyclic_shift(Eigen::Index n) {
  Mat m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, (i + 1) % n) = 1.0;
  return KernelMatrix(m);
}

Vec random_vec(Eigen::Index n, Philox& rng) {
  Vec f(n);
  for (Eigen::Index i = 0; i < n; ++i) f(i) = rng.normal();
  return f;
}

KernelSystem ring12321() { return gustafson_ring(RingTarget((Vec(5) << 1, 2, 3, 2, 1).finished())); }

}  // namespace

// ===========================================================================
// Domain types

TEST(FiniteTypes, RejectsInvalidDistributions) {
  EXPECT_THROW(FiniteDistribution((Vec(2) << 0.0, 1.0).finished()), std::invalid_argument);
  EXPECT_THROW(FiniteDistribution((Vec(2) << 0.5, 0.6).finished()), std::invalid_argument);
  EXPECT_NO_THROW(FiniteDistribution((Vec(2) << 0.25, 0.75).finished()));
}

TEST(FiniteTypes, RejectsNonStochasticKernels) {
  Mat m(2, 2);
  m << 0.5, 0.6, 0.5, 0.5;
  EXPECT_THROW(KernelMatrix{m}, std::invalid_argument);
  m << 1.2, -0.2, 0.5, 0.5;
  EXPECT_THROW(KernelMatrix{m}, std::invalid_argument);
}

TEST(FiniteTypes, InvolutionMustSquareToIdentity) {
  EXPECT_THROW(DeterministicInvolution({1, 2, 0}), std::invalid_argument);
  EXPECT_NO_THROW(DeterministicInvolution({1, 0, 2}));
}

// ===========================================================================
// Structural checks

TEST(CheckInvariance, IdentityKeepsAnyDistribution) {
  FiniteDistribution mu((Vec(3) << 0.2, 0.3, 0.5).finished());
  EXPECT_TRUE(check_invariance(KernelMatrix::identity(3), mu));
}

TEST(CheckInvariance, CyclicShiftKeepsUniform) {
  EXPECT_TRUE(check_invariance(cyclic_shift(3), FiniteDistribution::uniform(3)));
}

TEST(CheckInvariance, UniformRowsMoveSkewedMass) {
  FiniteDistribution mu((Vec(2) << 0.7, 0.3).finished());
  Mat m = Mat::Constant(2, 2, 0.5);
  EXPECT_FALSE(check_invariance(KernelMatrix(m), mu));
}

TEST(CheckInvariance, DimensionMismatchThrows) {
  EXPECT_THROW(check_invariance(KernelMatrix::identity(3), FiniteDistribution::uniform(2)), std::invalid_argument);
}

TEST(IsometricInvolution, IdentityAlwaysIsometric) {
  FiniteDistribution mu((Vec(3) << 0.2, 0.3, 0.5).finished());
  EXPECT_TRUE(check_isometric_involution(DeterministicInvolution::identity(3), mu));
}

TEST(IsometricInvolution, VelocityFlipOnLiftedSpace) {
  auto sys = ring12321();
  EXPECT_TRUE(check_isometric_involution(velocity_flip(5), sys.mu));
}

TEST(IsometricInvolution, SwapOfUnequalMassesFails) {
  FiniteDistribution mu((Vec(3) << 0.2, 0.3, 0.5).finished());
  EXPECT_FALSE(check_isometric_involution(DeterministicInvolution({1, 0, 2}), mu));
}

TEST(Adjoint, ReversibleKernelIsSelfAdjoint) {
  auto P = two_state(0.3);
  EXPECT_LT((adjoint(P, FiniteDistribution::uniform(2)).mat() - P.mat()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Adjoint, CyclicShiftReverses) {
  auto A = adjoint(cyclic_shift(4), FiniteDistribution::uniform(4));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(A(i, (i + 3) % 4), 1.0);
}

TEST(Adjoint, GustafsonAdjointIsQPQEntrywise) {
  auto sys = ring12321();
  auto A = adjoint(sys.P, sys.mu);
  const Mat& P = sys.P.mat();
  const Vec& m = sys.mu.weights();
  for (Eigen::Index z = 0; z < P.rows(); ++z)
    for (Eigen::Index w = 0; w < P.cols(); ++w) {
      double brute = m(w) * P(w, z) / m(z);
      EXPECT_NEAR(A(z, w), brute, 1e-12);
      EXPECT_NEAR(A(z, w), P(z ^ 1, w ^ 1), 1e-12);
    }
}

TEST(Adjoint, RequiresInvariance) {
  FiniteDistribution mu((Vec(2) << 0.7, 0.3).finished());
  EXPECT_THROW(adjoint(KernelMatrix(Mat::Constant(2, 2, 0.5)), mu), std::invalid_argument);
}

TEST(Adjoint, IsAnInvolutionOnRandomKernels) {
  Philox rng(11, 0);
  for (int t = 0; t < 20; ++t) {
    auto pr = random_dominated_pair(7, Side::left, rng);
    auto AA = adjoint(adjoint(pr.P1, pr.mu), pr.mu);
    EXPECT_LT((AA.mat() - pr.P1.mat()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MuQReversible, ReversibleWithIdentityQ) {
  EXPECT_TRUE(check_muQ_reversible(two_state(0.2), FiniteDistribution::uniform(2), DeterministicInvolution::identity(2)));
}

TEST(MuQReversible, GustafsonWithVelocityFlip) {
  auto sys = ring12321();
  EXPECT_TRUE(check_muQ_reversible(sys.P, sys.mu, sys.Q));
}

TEST(MuQReversible, CyclicShiftWithIdentityQFails) {
  for (Eigen::Index n : {3, 4, 6})
    EXPECT_FALSE(check_muQ_reversible(cyclic_shift(n), FiniteDistribution::uniform(n), DeterministicInvolution::identity(n)));
}

TEST(ReversibleParts, KernelEqualToQGivesIdentities) {
  auto sys = ring12321();
  auto parts = reversible_parts(sys.Q.kernel(), sys.Q);
  EXPECT_TRUE(parts.QP.mat().isIdentity(0.0));
  EXPECT_TRUE(parts.PQ.mat().isIdentity(0.0));
}

TEST(ReversibleParts, IdentityKernelGivesQ) {
  auto Q = velocity_flip(3);
  auto parts = reversible_parts(KernelMatrix::identity(6), Q);
  EXPECT_EQ(parts.QP.mat(), Q.matrix());
  EXPECT_EQ(parts.PQ.mat(), Q.matrix());
}

TEST(ReversibleParts, DetailedBalanceForMuQReversibleKernels) {
  auto sys = ring12321();
  auto parts = reversible_parts(sys.P, sys.Q);
  const Vec& m = sys.mu.weights();
  for (const Mat* K : {&parts.QP.mat(), &parts.PQ.mat()})
    for (Eigen::Index z = 0; z < K->rows(); ++z)
      for (Eigen::Index w = 0; w < K->cols(); ++w) EXPECT_NEAR(m(z) * (*K)(z, w), m(w) * (*K)(w, z), 1e-14);
  Philox rng(5, 0);
  for (int t = 0; t < 30; ++t) {
    auto pr = random_dominated_pair(8, t % 2 ? Side::left : Side::right, rng);
    auto p = reversible_parts(pr.P2, pr.Q);
    EXPECT_TRUE(check_mu_reversible(p.QP, pr.mu));
    EXPECT_TRUE(check_mu_reversible(p.PQ, pr.mu));
  }
}

TEST(ProjectSymmetric, ProjectorAlgebra) {
  Philox rng(3, 0);
  auto [mu, Q] = random_involution(9, rng);
  Vec f = random_vec(9, rng);
  Vec p = project_symmetric(f, Q, 1), m = project_symmetric(f, Q, -1);
  EXPECT_LT((p + m - f).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(Q.apply(p), p);
  EXPECT_EQ(Q.apply(m), -m);
  EXPECT_EQ(project_symmetric(p, Q, 1), p);
  EXPECT_EQ(project_symmetric(m, Q, -1), m);
  EXPECT_EQ(project_symmetric(p, Q, -1), Vec::Zero(9));
}

TEST(ProjectSymmetric, OddVelocityFunctionHasNoSymmetricPart) {
  Vec f(6);
  for (int z = 0; z < 6; ++z) f(z) = lifted_v(z);
  EXPECT_EQ(project_symmetric(f, velocity_flip(3), 1), Vec::Zero(6));
}

// ===========================================================================
// Dirichlet forms and variances

TEST(DirichletForm, ConstantAndIdentityVanish) {
  auto sys = ring12321();
  EXPECT_NEAR(dirichlet_form(Vec::Constant(10, 3.0), sys.P, sys.mu), 0.0, 1e-15);
  Philox rng(1, 0);
  EXPECT_EQ(dirichlet_form(random_vec(10, rng), KernelMatrix::identity(10), sys.mu), 0.0);
}

TEST(DirichletForm, TwoStateFlipIsTwoP) {
  for (double p : {0.1, 0.35, 0.9}) {
    Vec f = (Vec(2) << 1, -1).finished();
    auto mu = FiniteDistribution::uniform(2);
    EXPECT_NEAR(dirichlet_form(f, two_state(p), mu), 2 * p, 1e-15);
    EXPECT_NEAR(dirichlet_form_halfsum(f, two_state(p), mu), 2 * p, 1e-15);
  }
}

TEST(DirichletForm, HalfSumAgreesUnderReversibility) {
  Philox rng(21, 0);
  for (int t = 0; t < 50; ++t) {
    auto pr = random_dominated_pair(6, Side::left, rng);
    auto S = reversible_parts(pr.P1, pr.Q).QP;
    Vec f = random_vec(6, rng);
    EXPECT_NEAR(dirichlet_form(f, S, pr.mu), dirichlet_form_halfsum(f, S, pr.mu), 1e-10);
  }
}

TEST(VarLambda, LambdaZeroIsCenteredNorm) {
  auto sys = ring12321();
  Philox rng(2, 0);
  Vec f = random_vec(10, rng);
  EXPECT_NEAR(var_lambda(f, sys.P, sys.mu, 0.0), norm2_centered(f, sys.mu), 1e-14);
}

TEST(VarLambda, IdentityKernelGeometricFactor) {
  auto sys = ring12321();
  Philox rng(2, 1);
  Vec f = random_vec(10, rng);
  for (double l : {0.1, 0.5, 0.9, 0.99})
    EXPECT_NEAR(var_lambda(f, KernelMatrix::identity(10), sys.mu, l), (1 + l) / (1 - l) * norm2_centered(f, sys.mu), 1e-10);
}

TEST(VarLambda, TwoStateAgainstSeries) {
  Vec f = (Vec(2) << 1, -1).finished();
  auto mu = FiniteDistribution::uniform(2);
  double v = var_lambda(f, two_state(0.5), mu, 0.5);
  EXPECT_NEAR(v, oracle::var_series(f, two_state(0.5).mat(), mu.weights(), 0.5), 1e-12);
  // p = 1/2 makes successive states independent.
  EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(VarLambda, AgreesWithSeriesOnRandomKernels) {
  Philox rng(31, 0);
  for (int t = 0; t < 40; ++t) {
    Eigen::Index n = 2 + t % 7;
    auto pr = random_dominated_pair(n, t % 2 ? Side::left : Side::right, rng);
    Vec f = random_vec(n, rng);
    for (double l : {0.0, 0.3, 0.7, 0.95, 0.99})
      EXPECT_NEAR(var_lambda(f, pr.P1, pr.mu, l), oracle::var_series(f, pr.P1.mat(), pr.mu.weights(), l), 1e-8)
          << "n=" << n << " lambda=" << l;
  }
}

TEST(VarLambda, RejectsLambdaOne) {
  EXPECT_THROW(var_lambda(Vec::Ones(2), two_state(0.5), FiniteDistribution::uniform(2), 1.0), std::invalid_argument);
}

TEST(VarLambdaCycle, IdentityAtLambdaZero) {
  auto mu = FiniteDistribution::uniform(3);
  Vec f = (Vec(3) << 1, 2, 6).finished();
  auto I = KernelMatrix::identity(3);
  EXPECT_NEAR(var_lambda_cycle(f, I, I, mu, 0.0), norm2_centered(f, mu), 1e-14);
}

TEST(VarLambdaCycle, EqualKernelsReduceToHomogeneous) {
  Philox rng(41, 0);
  auto pr = random_dominated_pair(6, Side::left, rng);
  Vec f = random_vec(6, rng);
  for (double l : {0.2, 0.6, 0.9})
    EXPECT_NEAR(var_lambda_cycle(f, pr.P1, pr.P1, pr.mu, l), var_lambda(f, pr.P1, pr.mu, l), 1e-10);
}

TEST(VarLambdaCycle, AgreesWithSeriesAndIsSymmetric) {
  Philox rng(43, 0);
  for (int t = 0; t < 20; ++t) {
    auto a = random_dominated_pair(4, Side::left, rng);
    // Second kernel built on the first pair's mu.
    KernelMatrix P2 = compose(a.P2, a.P1);
    Vec f = random_vec(4, rng);
    double l = 0.7;
    double v = var_lambda_cycle(f, a.P1, P2, a.mu, l);
    EXPECT_NEAR(v, oracle::cycle_series(f, a.P1.mat(), P2.mat(), a.mu.weights(), l), 1e-9);
    EXPECT_NEAR(v, var_lambda_cycle(f, P2, a.P1, a.mu, l), 1e-12);
  }
}

TEST(VarLambdaCycle, FixedFirstKernelFactorIdentity) {
  RingTarget t((Vec(5) << 1, 2, 3, 2, 1).finished());
  auto sys = gustafson_ring(t);
  KernelMatrix R = refresh_kernel(5, 0.3);
  Philox rng(47, 0);
  Vec f = lift_observable(random_vec(5, rng));
  KernelMatrix RP = compose(R, sys.P);
  double n2 = norm2_centered(f, sys.mu);
  for (double l : {0.1, 0.5, 0.9}) {
    double lhs = var_lambda_cycle(f, R, sys.P, sys.mu, l);
    double rhs = (2 + l + 1 / l) / 2 * var_lambda(f, RP, sys.mu, l * l) + (l - 1 / l) / 2 * n2;
    EXPECT_NEAR(lhs, rhs, 1e-9);
  }
}

// ===========================================================================
// Spectral gap

TEST(SpectralGap, Examples) {
  EXPECT_NEAR(spectral_gap_reversible(KernelMatrix::identity(4), FiniteDistribution::uniform(4)), 0.0, 1e-14);
  for (double p : {0.1, 0.3}) EXPECT_NEAR(spectral_gap_reversible(two_state(p), FiniteDistribution::uniform(2)), 2 * p, 1e-14);
  FiniteDistribution mu((Vec(4) << 0.1, 0.2, 0.3, 0.4).finished());
  Mat rank1 = Vec::Ones(4) * mu.weights().transpose();
  EXPECT_NEAR(spectral_gap_reversible(KernelMatrix(rank1), mu), 1.0, 1e-14);
}

TEST(SpectralGap, IsTheRayleighInfimum) {
  Philox rng(53, 0);
  auto pr = random_dominated_pair(6, Side::left, rng);
  auto S = reversible_parts(pr.P1, pr.Q).QP;
  double gap = spectral_gap_reversible(S, pr.mu);
  for (int t = 0; t < 2000; ++t) {
    Vec f = centered(random_vec(6, rng), pr.mu);
    EXPECT_GE(dirichlet_form_halfsum(f, S, pr.mu) / inner(f, f, pr.mu), gap - 1e-12);
  }
}

TEST(SpectralGap, RejectsNonReversible) {
  EXPECT_THROW(spectral_gap_reversible(cyclic_shift(3), FiniteDistribution::uniform(3)), std::invalid_argument);
}

// ===========================================================================
// Certificates and orderings

TEST(DominanceCertificate, EqualKernelsHoldWithZeroEigenvalue) {
  auto sys = ring12321();
  auto c = dirichlet_dominance_certificate(sys.P, sys.P, sys.mu, sys.Q, Side::left);
  EXPECT_TRUE(c.holds);
  EXPECT_NEAR(c.dominance_matrix_min_eig, 0.0, 1e-14);
}

TEST(DominanceCertificate, LiftedRatesAndWitness) {
  RingTarget t((Vec(5) << 1, 2, 3, 2, 1).finished());
  auto pair = mh_subkernels(t, ring_shift_proposal(5, 1), ring_shift_proposal(5, -1));
  auto lo = lifted_kernel(pair, SwitchingRate::minimal());
  auto hi = lifted_kernel(pair, SwitchingRate::maximal());
  auto ok = dirichlet_dominance_certificate(lo.P, hi.P, lo.mu, lo.Q, Side::right);
  EXPECT_TRUE(ok.holds);
  auto bad = dirichlet_dominance_certificate(hi.P, lo.P, lo.mu, lo.Q, Side::right);
  ASSERT_FALSE(bad.holds);
  ASSERT_TRUE(bad.witness.has_value());
  auto a = reversible_parts(hi.P, hi.Q).PQ, b = reversible_parts(lo.P, lo.Q).PQ;
  EXPECT_LT(dirichlet_form_halfsum(*bad.witness, a, lo.mu) - dirichlet_form_halfsum(*bad.witness, b, lo.mu), -1e-10);
}

TEST(OrderingTheorem, EqualKernelsHaveZeroDifference) {
  auto sys = ring12321();
  auto rep = verify_ordering_theorem(sys.P, sys.P, sys.mu, sys.Q, lambda_grid_005(), 50, 1);
  EXPECT_TRUE(rep.pass);
  EXPECT_NEAR(rep.max_violation_plus, 0.0, 1e-12);
  EXPECT_NEAR(rep.max_violation_minus, 0.0, 1e-12);
}

TEST(OrderingTheorem, PeskunPairOnThreeStates) {
  FiniteDistribution mu((Vec(3) << 0.2, 0.3, 0.5).finished());
  // Metropolis with uniform proposal vs a lazier version of it.
  Mat P1 = Mat::Zero(3, 3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (a != b) P1(a, b) = 0.5 * std::min(1.0, mu(b) / mu(a));
  for (int a = 0; a < 3; ++a) P1(a, a) = 1.0 - P1.row(a).sum();
  Mat P2 = 0.6 * P1 + 0.4 * Mat::Identity(3, 3);
  auto Q = DeterministicInvolution::identity(3);
  auto rep = verify_ordering_theorem(KernelMatrix(P1), KernelMatrix(P2), mu, Q, lambda_grid_005(), 200, 2);
  EXPECT_TRUE(rep.pass);
  EXPECT_LT(rep.max_violation_plus, 0.0);
}

TEST(OrderingTheorem, LiftedMinimalBeatsMaximal) {
  RingTarget t((Vec(5) << 1, 2, 3, 2, 1).finished());
  auto pair = mh_subkernels(t, ring_shift_proposal(5, 1), ring_shift_proposal(5, -1));
  auto lo = lifted_kernel(pair, SwitchingRate::minimal());
  auto hi = lifted_kernel(pair, SwitchingRate::maximal());
  std::vector<double> ls = lambda_grid_005();
  ls.push_back(0.99);
  auto rep = verify_ordering_theorem(lo.P, hi.P, lo.mu, lo.Q, ls, 200, 3);
  EXPECT_TRUE(rep.pass) << rep.max_violation_plus << " " << rep.max_violation_minus;
}

TEST(OrderingTheorem, RequiresCertificate) {
  Philox rng(61, 0);
  auto pr = random_dominated_pair(6, Side::left, rng);
  EXPECT_THROW(verify_ordering_theorem(pr.P2, pr.P1, pr.mu, pr.Q, {0.5}, 10, 1), std::invalid_argument);
}

TEST(OrderingTheorem, RandomPairsProperty) {
  Philox rng(67, 0);
  for (int t = 0; t < 10; ++t) {
    auto pr = random_dominated_pair(8, t % 2 ? Side::left : Side::right, rng);
    auto rep = verify_ordering_theorem(pr.P1, pr.P2, pr.mu, pr.Q, lambda_grid_005(), 1000, 100 + t);
    EXPECT_TRUE(rep.pass) << rep.max_violation_plus << " " << rep.max_violation_minus;
  }
}

TEST(QuantitativeBound, AlphaOneIsPlainOrdering) {
  Philox rng(71, 0);
  auto pr = random_dominated_pair(6, Side::left, rng);
  Vec f = project_symmetric(random_vec(6, rng), pr.Q, 1);
  auto b = quantitative_bound(pr.P1, pr.P2, pr.mu, pr.Q, 1.0, f, 0.8);
  EXPECT_DOUBLE_EQ(b.lambda_prime, 0.8);
  EXPECT_NEAR(b.lhs, var_lambda(f, pr.P1, pr.mu, 0.8), 1e-14);
  EXPECT_NEAR(b.rhs, var_lambda(f, pr.P2, pr.mu, 0.8), 1e-14);
  EXPECT_TRUE(b.holds);
}

TEST(QuantitativeBound, EqualityForLazyVersion) {
  FiniteDistribution mu((Vec(4) << 0.1, 0.2, 0.3, 0.4).finished());
  Mat P1 = Vec::Ones(4) * mu.weights().transpose();
  auto Q = DeterministicInvolution::identity(4);
  Vec f = (Vec(4) << 1, -2, 0.5, 3).finished();
  for (double alpha : {0.25, 0.5, 0.9}) {
    KernelMatrix P2((1 - alpha) * Mat::Identity(4, 4) + alpha * P1);
    for (double l : {0.3, 0.9}) {
      auto b = quantitative_bound(KernelMatrix(P1), P2, mu, Q, alpha, f, l);
      EXPECT_NEAR(b.lhs, b.rhs, 1e-10);
    }
  }
}

TEST(QuantitativeBound, RandomDominatedPairsHalfAlpha) {
  Philox rng(73, 0);
  const double alpha = 0.5;
  for (int t = 0; t < 20; ++t) {
    auto pr = random_dominated_pair(6, Side::left, rng);
    // alpha*(Id - QP1) >= Id - QP2' for QP2' = (1-beta) Id + beta QP2 with beta <= alpha.
    Mat S2 = (1 - alpha) * Mat::Identity(6, 6) + alpha * pr.Q.left(pr.P2.mat());
    KernelMatrix P2(pr.Q.left(S2));
    Vec f = project_symmetric(random_vec(6, rng), pr.Q, 1);
    for (double l : {0.2, 0.6, 0.95}) EXPECT_TRUE(verify_quantitative_remark(pr.P1, P2, pr.mu, pr.Q, alpha, f, l));
  }
}

TEST(QuantitativeBound, UncertifiedHypothesisThrows) {
  Philox rng(79, 0);
  auto pr = random_dominated_pair(6, Side::left, rng);
  Vec f = project_symmetric(random_vec(6, rng), pr.Q, 1);
  EXPECT_THROW(quantitative_bound(pr.P2, pr.P1, pr.mu, pr.Q, 0.5, f, 0.5), std::invalid_argument);
}
