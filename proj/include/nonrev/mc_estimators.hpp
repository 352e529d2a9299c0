#pragma once
// Continuous-state samplers and empirical lambda-asymptotic variances.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "nonrev/errors.hpp"
#include "nonrev/kernel_zoo.hpp"
#include "nonrev/parallel.hpp"
#include "nonrev/rng.hpp"
#include "nonrev/stats.hpp"

namespace nonrev {

// ---------------------------------------------------------------------------
// Phase space

struct PhaseState {
  Vec x;
  Vec v;
  bool finite() const { return x.allFinite() && v.allFinite(); }
};

struct SeparableHamiltonian {
  std::string name;
  std::function<double(const Vec&)> U;
  std::function<Vec(const Vec&)> grad;
  double sigma2 = 1.0;

  double energy(const PhaseState& s) const { return U(s.x) + 0.5 * s.v.squaredNorm() / sigma2; }

  // U(x) = |x|^2 / (2 s^2).
  static SeparableHamiltonian gaussian(double s = 1.0, double sigma2 = 1.0) {
    if (!(s > 0.0) || !(sigma2 > 0.0)) throw ConfigError("gaussian: scales must be positive");
    double p = 1.0 / (s * s);
    return {"gaussian", [p](const Vec& x) { return 0.5 * p * x.squaredNorm(); },
            [p](const Vec& x) { return Vec(p * x); }, sigma2};
  }

  // U(x) = sum_i a x_i^4 - b x_i^2.
  static SeparableHamiltonian double_well(double a, double b, double sigma2 = 1.0) {
    if (!(a > 0.0) || !(sigma2 > 0.0)) throw ConfigError("double_well: a and sigma2 must be positive");
    return {"double-well",
            [a, b](const Vec& x) { return (a * x.array().pow(4) - b * x.array().square()).sum(); },
            [a, b](const Vec& x) { return Vec(4.0 * a * x.array().cube() - 2.0 * b * x.array()); }, sigma2};
  }

  // Central differences against grad at each probe.
  bool check_gradient(const std::vector<Vec>& probes, double rel = 1e-5) const {
    for (const Vec& x : probes) {
      Vec g = grad(x);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        double h = 1e-5 * std::max(1.0, std::abs(x(i)));
        Vec a = x, b = x;
        a(i) += h;
        b(i) -= h;
        double fd = (U(a) - U(b)) / (2 * h);
        if (std::abs(fd - g(i)) > rel * std::max(1.0, std::abs(g(i)))) return false;
      }
    }
    return true;
  }
};

inline PhaseState flip(PhaseState s) {
  s.v = -s.v;
  return s;
}

// Stormer-Verlet: half kick, drift, half kick, repeated nleap times.
inline PhaseState leapfrog(PhaseState s, const SeparableHamiltonian& H, double step, int nleap) {
  const double m = 1.0 / H.sigma2;
  for (int k = 0; k < nleap; ++k) {
    s.v -= 0.5 * step * H.grad(s.x);
    s.x += step * m * s.v;
    s.v -= 0.5 * step * H.grad(s.x);
  }
  return s;
}

// v <- v cos(w) + v' sin(w), v' ~ N(0, sigma2 I).
inline void refresh_momentum(PhaseState& s, const SeparableHamiltonian& H, double omega, Philox& rng) {
  // cos(pi/2) is not exactly zero in floating point.
  const bool full = omega == std::numbers::pi / 2;
  const double c = full ? 0.0 : std::cos(omega), sn = full ? 1.0 : std::sin(omega), sd = std::sqrt(H.sigma2);
  for (Eigen::Index i = 0; i < s.v.size(); ++i) s.v(i) = c * s.v(i) + sn * sd * rng.normal();
}

struct StepCounters {
  std::uint64_t steps = 0;
  std::uint64_t rejections = 0;
  std::uint64_t overflows = 0;
};

// Accept-or-flip stage of a metropolized flow, one uniform per call.
inline PhaseState flow_accept(const PhaseState& s, const SeparableHamiltonian& H, double step, int nleap,
                              const AcceptanceRule& phi, Philox& rng, StepCounters* cnt = nullptr) {
  if (!(step > 0.0) || nleap < 1) throw ConfigError("flow step must be positive");
  PhaseState y = leapfrog(s, H, step, nleap);
  double h0 = H.energy(s), h1 = y.finite() ? H.energy(y) : std::numeric_limits<double>::infinity();
  double u = rng.uniform();
  if (cnt) ++cnt->steps;
  if (!std::isfinite(h1)) {
    if (cnt) ++cnt->overflows, ++cnt->rejections;
    return flip(s);
  }
  if (u < phi(std::exp(h0 - h1))) return y;
  if (cnt) ++cnt->rejections;
  return flip(s);
}

inline PhaseState ghmc_step(PhaseState s, const SeparableHamiltonian& H, double step, int nleap, double omega,
                            const AcceptanceRule& phi, Philox& rng, StepCounters* cnt = nullptr) {
  if (!(omega > 0.0) || omega > std::numbers::pi / 2 + 1e-15) throw ConfigError("omega must lie in (0, pi/2]");
  refresh_momentum(s, H, omega, rng);
  return flow_accept(s, H, step, nleap, phi, rng, cnt);
}

// Extra-chance stage: smallest k with u < alpha_k, alpha_k = max(alpha_{k-1}, min(1, r_k)).
inline PhaseState extra_chance_step(const PhaseState& s, const SeparableHamiltonian& H, double step, int nleap,
                                    int K, Philox& rng, StepCounters* cnt = nullptr) {
  if (K < 1) throw ConfigError("extra_chance_step: K >= 1");
  if (!(step > 0.0) || nleap < 1) throw ConfigError("flow step must be positive");
  const double h0 = H.energy(s);
  const double u = rng.uniform();
  if (cnt) ++cnt->steps;
  double alpha = 0.0;
  PhaseState y = s;
  for (int k = 1; k <= K; ++k) {
    y = leapfrog(y, H, step, nleap);
    if (!y.finite() || !std::isfinite(H.energy(y))) {
      if (cnt) ++cnt->overflows;
      break;
    }
    alpha = std::max(alpha, std::min(1.0, std::exp(h0 - H.energy(y))));
    if (u < alpha) return y;
  }
  if (cnt) ++cnt->rejections;
  return flip(s);
}

inline PhaseState ghmc_extra_chance_step(PhaseState s, const SeparableHamiltonian& H, double step, int nleap,
                                         double omega, int K, Philox& rng, StepCounters* cnt = nullptr) {
  refresh_momentum(s, H, omega, rng);
  return extra_chance_step(s, H, step, nleap, K, rng, cnt);
}

// ---------------------------------------------------------------------------
// Guided walk on the real line

struct GuidedState {
  double x = 0.0;
  int v = 1;
};

inline GuidedState guided_walk_step(GuidedState s, const std::function<double(double)>& log_density,
                                    const std::function<double(Philox&)>& q, Philox& rng) {
  double y = s.x + std::abs(q(rng)) * s.v;
  double ly = log_density(y), lx = log_density(s.x);
  double r = std::isfinite(ly) ? std::exp(ly - lx) : 0.0;
  if (rng.uniform() < std::min(1.0, r)) {
    s.x = y;
  } else {
    s.v = -s.v;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Empirical lambda-asymptotic variance

// Smallest K with lambda^K < 1e-8.
inline int default_max_lag(double lambda) {
  if (lambda <= 0.0) return 0;
  return int(std::ceil(std::log(1e-8) / std::log(lambda) + 1e-12));
}

// Biased autocovariances gamma_0..gamma_K around the sample mean.
inline std::vector<double> autocovariances(const std::vector<double>& y, int K) {
  const std::size_t n = y.size();
  double m = 0.0;
  for (double a : y) m += a;
  m /= double(n);
  std::vector<double> g(std::size_t(K) + 1, 0.0);
  for (int k = 0; k <= K && std::size_t(k) < n; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t + std::size_t(k) < n; ++t) s += (y[t] - m) * (y[t + std::size_t(k)] - m);
    g[std::size_t(k)] = s / double(n);
  }
  return g;
}

// gamma_0 + 2 sum_{k<=K} lambda^k gamma_k in O(n).
inline double estimate_var_lambda(const std::vector<double>& chain, double lambda, int max_lag = -1) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in [0,1)");
  const int K = max_lag < 0 ? default_max_lag(lambda) : max_lag;
  const std::size_t n = chain.size();
  if (n < std::max<std::size_t>(2, 10 * std::size_t(K))) throw NumericalError("chain shorter than 10 * max_lag");
  double m = 0.0;
  for (double a : chain) m += a;
  m /= double(n);
  std::vector<double> y(n);
  for (std::size_t t = 0; t < n; ++t) y[t] = chain[t] - m;
  double g0 = 0.0;
  for (double a : y) g0 += a * a;
  if (K == 0 || lambda == 0.0) return g0 / double(n);
  // S_t = sum_{k=1}^K lambda^k y_{t+k}, built backwards.
  const double lk1 = std::pow(lambda, K + 1);
  double S = 0.0, cross = 0.0;
  for (std::size_t t = n - 1; t-- > 0;) {
    double drop = t + std::size_t(K) + 1 < n ? y[t + std::size_t(K) + 1] : 0.0;
    S = lambda * (y[t + 1] + S) - lk1 * drop;
    cross += y[t] * S;
  }
  return (g0 + 2.0 * cross) / double(n);
}

struct ChainStats {
  double lambda = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  std::vector<double> per_replicate;
};

inline ChainStats summarize_replicates(double lambda, std::vector<double> per_rep) {
  if (per_rep.size() < 16) throw ConfigError("at least 16 replicates are required");
  auto m = stats::mean_se(per_rep);
  return {lambda, m.mean, m.se, std::move(per_rep)};
}

// ---------------------------------------------------------------------------
// Acceptance-rule comparison for GHMC

struct RuleComparisonConfig {
  SeparableHamiltonian H = SeparableHamiltonian::gaussian();
  double omega = std::numbers::pi / 4;
  double step = 1.0;
  int nleap = 1;
  std::vector<AcceptanceRule> rules{AcceptanceRule::metropolis(), AcceptanceRule::barker()};
  std::vector<double> lambdas{0.5, 0.9};
  std::vector<std::pair<std::string, std::function<double(double)>>> observables;
  int replicates = 16;
  std::size_t steps = 100000;
  std::size_t burn_in = 1000;
  std::uint64_t seed = 1;
};

struct RuleComparisonRow {
  std::string observable;
  double lambda = 0.0;
  std::vector<ChainStats> per_rule;
  bool pass = false;  // later rules are not below the first beyond 2 combined SE
};

struct RuleComparisonReport {
  std::vector<RuleComparisonRow> rows;
  std::vector<double> rejection_rate;
  bool pass = true;
};

// x-trajectory of a 1D GHMC chain started at the origin; the stream is shared across rules.
inline std::vector<double> ghmc_trace(const RuleComparisonConfig& c, const AcceptanceRule& phi, std::uint64_t stream,
                                      StepCounters* cnt) {
  Philox rng(c.seed, stream);
  PhaseState s{Vec::Zero(1), Vec::Zero(1)};
  s.v(0) = std::sqrt(c.H.sigma2) * rng.normal();
  for (std::size_t t = 0; t < c.burn_in; ++t) s = ghmc_step(s, c.H, c.step, c.nleap, c.omega, phi, rng);
  std::vector<double> xs(c.steps);
  for (std::size_t t = 0; t < c.steps; ++t) {
    s = ghmc_step(s, c.H, c.step, c.nleap, c.omega, phi, rng, cnt);
    xs[t] = s.x(0);
  }
  return xs;
}

inline RuleComparisonReport compare_acceptance_rules(const RuleComparisonConfig& c) {
  const std::size_t nr = c.rules.size(), nf = c.observables.size(), nl = c.lambdas.size();
  const std::size_t R = std::size_t(c.replicates);
  // est[rep][rule][f][lambda]
  std::vector<std::vector<std::vector<std::vector<double>>>> est(
      R, std::vector<std::vector<std::vector<double>>>(nr, std::vector<std::vector<double>>(nf, std::vector<double>(nl))));
  std::vector<std::vector<StepCounters>> cnt(R, std::vector<StepCounters>(nr));
  parallel_for(R, [&](std::size_t r) {
    for (std::size_t a = 0; a < nr; ++a) {
      auto xs = ghmc_trace(c, c.rules[a], r, &cnt[r][a]);
      std::vector<double> fx(xs.size());
      for (std::size_t j = 0; j < nf; ++j) {
        for (std::size_t t = 0; t < xs.size(); ++t) fx[t] = c.observables[j].second(xs[t]);
        for (std::size_t l = 0; l < nl; ++l) est[r][a][j][l] = estimate_var_lambda(fx, c.lambdas[l]);
      }
    }
  });
  RuleComparisonReport rep;
  for (std::size_t a = 0; a < nr; ++a) {
    double rej = 0, tot = 0;
    for (std::size_t r = 0; r < R; ++r) rej += double(cnt[r][a].rejections), tot += double(cnt[r][a].steps);
    rep.rejection_rate.push_back(rej / tot);
  }
  for (std::size_t j = 0; j < nf; ++j)
    for (std::size_t l = 0; l < nl; ++l) {
      RuleComparisonRow row{c.observables[j].first, c.lambdas[l], {}, true};
      for (std::size_t a = 0; a < nr; ++a) {
        std::vector<double> v(R);
        for (std::size_t r = 0; r < R; ++r) v[r] = est[r][a][j][l];
        row.per_rule.push_back(summarize_replicates(c.lambdas[l], std::move(v)));
      }
      for (std::size_t a = 1; a < nr; ++a) {
        const auto &m = row.per_rule[0], &b = row.per_rule[a];
        double se = std::sqrt(m.se * m.se + b.se * b.se);
        if (b.estimate < m.estimate - 2.0 * se) row.pass = false;
      }
      rep.pass = rep.pass && row.pass;
      rep.rows.push_back(std::move(row));
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Full versus partial momentum refresh

// Monte Carlo estimate of <g, Q(R_{pi/2} - R_w) g>_mu for g = v and g = v^2 in 1D,
// with the closed forms sigma2 cos(w) and -2 sigma2^2 cos^2(w).
struct RefreshWitness {
  std::string g;
  double estimate = 0.0;
  double se = 0.0;
  double exact = 0.0;
};

inline std::vector<RefreshWitness> refresh_comparison_witnesses(double omega, double sigma2, std::size_t n,
                                                                Philox& rng) {
  const double c = std::cos(omega), sd = std::sqrt(sigma2);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = sd * rng.normal();
    // (R_{pi/2} g)(v) = E g(v'), (R_w g)(v) = E g(v c + v' sin w); Q maps v to -v.
    a[i] = v * (0.0 - (-v) * c);
    b[i] = v * v * (sigma2 - (v * v * c * c + sigma2 * (1 - c * c)));
  }
  auto ma = stats::mean_se(a), mb = stats::mean_se(b);
  return {{"v", ma.mean, ma.se, sigma2 * c}, {"v^2", mb.mean, mb.se, -2.0 * sigma2 * sigma2 * c * c}};
}

}  // namespace nonrev
