#pragma once
// Zig-Zag process: intensities, event simulation, path functionals,
// continuous-time variance estimators and generator quadrature.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nonrev/errors.hpp"
#include "nonrev/finite_core.hpp"
#include "nonrev/parallel.hpp"
#include "nonrev/rng.hpp"
#include "nonrev/stats.hpp"

namespace nonrev::zz {

// ---------------------------------------------------------------------------
// Smoothed acceptance function and intensities

// log phi_eps(r) with phi_eps(r) = E min{1, r exp(-eps/2 + sqrt(eps) Z)}.
inline double log_phi_eps(double eps, double log_r) {
  if (eps < 0.0) throw ConfigError("phi_eps: eps >= 0");
  if (log_r == -std::numeric_limits<double>::infinity()) return log_r;
  if (eps == 0.0) return std::min(0.0, log_r);
  const double se = std::sqrt(eps);
  double a = log_r + stats::log_normal_sf(0.5 * se + log_r / se);
  double b = stats::log_normal_sf(0.5 * se - log_r / se);
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double phi_eps(double eps, double r) {
  if (!(r >= 0.0)) throw ConfigError("phi_eps: r >= 0");
  if (r == 0.0) return 0.0;
  return std::exp(log_phi_eps(eps, std::log(r)));
}

inline double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

enum class IntensityKind { canonical, penalty, barker };
enum class RefreshMode { full, per_coordinate };

struct IntensitySpec {
  IntensityKind kind = IntensityKind::canonical;
  double eps = 0.0;           // penalty smoothing
  double gamma = 0.0;         // extra constant flip rate per coordinate
  double refresh_rate = 0.0;  // total refresh rate
  RefreshMode refresh_mode = RefreshMode::full;
  double window = 1.0;        // thinning look-ahead

  static IntensitySpec canonical() { return {}; }
  static IntensitySpec penalty(double eps) { return {IntensityKind::penalty, eps}; }
  static IntensitySpec barker() { return {IntensityKind::barker}; }
  static IntensitySpec canonical_plus_gamma(double g) { return {IntensityKind::canonical, 0.0, g}; }

  IntensitySpec with_refresh(double rate, RefreshMode mode) const {
    IntensitySpec s = *this;
    s.refresh_rate = rate;
    s.refresh_mode = mode;
    return s;
  }

  void validate() const {
    if (kind == IntensityKind::penalty && !(eps > 0.0)) throw ConfigError("penalty intensity requires eps > 0");
    if (!(gamma >= 0.0) || !(refresh_rate >= 0.0)) throw ConfigError("rates must be nonnegative");
    if (!(window > 0.0)) throw ConfigError("thinning window must be positive");
  }

  // Switching intensity as a function of s = d_iU(x) v_i; gamma excluded.
  // Each kind is -log phi(exp(-s)) for its acceptance function phi, so that
  // base(s) - base(-s) = s, base is nondecreasing and 1-Lipschitz.
  double base(double s) const {
    switch (kind) {
      case IntensityKind::canonical: return std::max(0.0, s);
      case IntensityKind::barker: return softplus(s);
      case IntensityKind::penalty: return std::max(0.0, -log_phi_eps(eps, -s));
    }
    return 0.0;
  }
  double flip_rate(double s) const { return base(s) + gamma; }

  std::string name() const {
    switch (kind) {
      case IntensityKind::canonical: return "canonical";
      case IntensityKind::barker: return "barker";
      case IntensityKind::penalty: return "penalty";
    }
    return "";
  }
};

// ---------------------------------------------------------------------------
// Potentials

struct Potential {
  std::string name;
  int dim = 1;
  std::function<double(const Vec&)> U;
  std::function<Vec(const Vec&)> grad;
  // sup_{0<=t<=tau} |d/dt d_iU(x+tv) v_i|, used for thinning envelopes.
  std::function<double(const Vec& x, const Vec& v, int i, double tau)> ray_bound;
  std::optional<Vec> gaussian_sd;  // set for diagonal Gaussians

  static Potential gaussian(const Vec& sd) {
    for (Eigen::Index i = 0; i < sd.size(); ++i)
      if (!(sd(i) > 0.0)) throw ConfigError("gaussian: standard deviations must be positive");
    Vec p = sd.array().square().inverse();
    Potential P;
    P.name = "gaussian";
    P.dim = int(sd.size());
    P.U = [p](const Vec& x) { return 0.5 * (p.array() * x.array().square()).sum(); };
    P.grad = [p](const Vec& x) { return Vec(p.array() * x.array()); };
    P.ray_bound = [p](const Vec&, const Vec&, int i, double) { return p(i); };
    P.gaussian_sd = sd;
    return P;
  }

  // U(x) = sum_i a x_i^4 - b x_i^2.
  static Potential double_well(int d, double a, double b) {
    if (!(a > 0.0) || d < 1) throw ConfigError("double_well: a > 0 and d >= 1");
    Potential P;
    P.name = "double-well";
    P.dim = d;
    P.U = [a, b](const Vec& x) { return (a * x.array().pow(4) - b * x.array().square()).sum(); };
    P.grad = [a, b](const Vec& x) { return Vec(4.0 * a * x.array().cube() - 2.0 * b * x.array()); };
    P.ray_bound = [a, b](const Vec& x, const Vec&, int i, double tau) {
      double r = std::abs(x(i)) + tau;
      return 12.0 * a * r * r + 2.0 * std::abs(b);
    };
    return P;
  }

  // Natural cubic spline through (knots, values), linear beyond the end knots.
  static Potential tabulated(std::vector<double> knots, std::vector<double> values) {
    const std::size_t n = knots.size();
    if (n < 3 || values.size() != n) throw ConfigError("tabulated potential: need >= 3 matching knots and values");
    for (std::size_t k = 0; k + 1 < n; ++k)
      if (!(knots[k + 1] > knots[k])) throw ConfigError("tabulated potential: knots must increase");
    // Second derivatives M_k with M_0 = M_{n-1} = 0 (Thomas algorithm).
    std::vector<double> M(n, 0.0), c(n, 0.0), rhs(n, 0.0);
    for (std::size_t k = 1; k + 1 < n; ++k) {
      double h0 = knots[k] - knots[k - 1], h1 = knots[k + 1] - knots[k];
      double diag = 2.0 * (h0 + h1);
      double r = 6.0 * ((values[k + 1] - values[k]) / h1 - (values[k] - values[k - 1]) / h0);
      double lower = k > 1 ? h0 : 0.0;
      double denom = diag - lower * c[k - 1];
      c[k] = h1 / denom;
      rhs[k] = (r - lower * rhs[k - 1]) / denom;
    }
    for (std::size_t k = n - 1; k-- > 1;) M[k] = rhs[k] - (k + 1 < n - 1 ? c[k] * M[k + 1] : 0.0);
    auto eval = [knots, values, M](double x, int deriv) {
      const std::size_t m = knots.size();
      auto seg = [&](std::size_t k, double t, int dv) {
        double h = knots[k + 1] - knots[k];
        double A = (knots[k + 1] - t) / h, B = (t - knots[k]) / h;
        if (dv == 0)
          return A * values[k] + B * values[k + 1] + ((A * A * A - A) * M[k] + (B * B * B - B) * M[k + 1]) * h * h / 6.0;
        if (dv == 1)
          return (values[k + 1] - values[k]) / h + ((1 - 3 * A * A) * M[k] + (3 * B * B - 1) * M[k + 1]) * h / 6.0;
        return A * M[k] + B * M[k + 1];
      };
      // Linear continuation with the end slopes.
      if (x <= knots[0] || x >= knots[m - 1]) {
        const bool left = x <= knots[0];
        const double k0 = left ? knots[0] : knots[m - 1];
        const double slope = seg(left ? 0 : m - 2, k0, 1);
        if (deriv == 0) return (left ? values[0] : values[m - 1]) + (x - k0) * slope;
        return deriv == 1 ? slope : 0.0;
      }
      std::size_t k = std::size_t(std::upper_bound(knots.begin(), knots.end(), x) - knots.begin()) - 1;
      return seg(std::min(k, m - 2), x, deriv);
    };
    double max_curv = 0.0;
    for (double m : M) max_curv = std::max(max_curv, std::abs(m));
    Potential P;
    P.name = "tabulated";
    P.dim = 1;
    P.U = [eval](const Vec& x) { return eval(x(0), 0); };
    P.grad = [eval](const Vec& x) { return Vec::Constant(1, eval(x(0), 1)); };
    P.ray_bound = [max_curv](const Vec&, const Vec&, int, double) { return max_curv; };
    return P;
  }

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

// ---------------------------------------------------------------------------
// Trajectories

enum class EventType { flip, refresh };

struct Event {
  double t = 0.0;
  Vec x;  // position at the event
  Vec v;  // velocity after the event
  EventType type = EventType::flip;
  int coord = -1;  // flipped coordinate, -1 for a full refresh
};

struct Trajectory {
  Vec x0, v0;
  double horizon = 0.0;
  std::vector<Event> events;
  std::uint64_t proposals = 0;  // thinning proposals, including accepted ones

  int dim() const { return int(x0.size()); }

  // Calls fn(t0, x, v, len) for each linear piece of the path.
  template <class F>
  void for_each_segment(F&& fn) const {
    double t = 0.0;
    Vec x = x0, v = v0;
    for (const Event& e : events) {
      fn(t, x, v, e.t - t);
      t = e.t;
      x = e.x;
      v = e.v;
    }
    fn(t, x, v, horizon - t);
  }

  Vec final_position() const {
    const Event* last = events.empty() ? nullptr : &events.back();
    Vec x = last ? last->x : x0;
    Vec v = last ? last->v : v0;
    return x + (horizon - (last ? last->t : 0.0)) * v;
  }

  Vec position_at(double t) const {
    Vec x = x0, v = v0;
    double t0 = 0.0;
    for (const Event& e : events) {
      if (e.t > t) break;
      x = e.x, v = e.v, t0 = e.t;
    }
    return x + (t - t0) * v;
  }

  // Columns t, x_1..x_d, v_1..v_d, event_type. First row is the start, last the horizon.
  void write_csv(std::ostream& os) const {
    const int d = dim();
    os << "t";
    for (int i = 1; i <= d; ++i) os << ",x_" << i;
    for (int i = 1; i <= d; ++i) os << ",v_" << i;
    os << ",event_type\n";
    auto row = [&](double t, const Vec& x, const Vec& v, const std::string& type) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", t);
      os << buf;
      for (int i = 0; i < d; ++i) std::snprintf(buf, sizeof buf, "%.17g", x(i)), os << ',' << buf;
      for (int i = 0; i < d; ++i) os << ',' << int(v(i));
      os << ',' << type << '\n';
    };
    row(0.0, x0, v0, "start");
    for (const Event& e : events)
      row(e.t, e.x, e.v, e.type == EventType::refresh ? "refresh" : "flip" + std::to_string(e.coord + 1));
    const Vec xT = final_position();
    row(horizon, xT, events.empty() ? v0 : events.back().v, "end");
  }
};

enum class EventSampler { automatic, thinning };

namespace detail {

// First arrival of a Poisson process with rate (a + b t)_+, b > 0.
inline double invert_affine_positive_part(double a, double b, double E) {
  if (a >= 0.0) return 2.0 * E / (a + std::sqrt(a * a + 2.0 * b * E));
  return -a / b + std::sqrt(2.0 * E / b);
}

// First arrival of a Poisson process with rate a + b t, a, b >= 0.
inline double invert_affine(double a, double b, double E) {
  if (b == 0.0) return a > 0.0 ? E / a : std::numeric_limits<double>::infinity();
  return 2.0 * E / (a + std::sqrt(a * a + 2.0 * b * E));
}

inline void check_finite_grad(const Vec& g) {
  if (!g.allFinite()) throw NumericalError("non-finite gradient along the trajectory");
}

// Next switching time of coordinate i by thinning, capped at `cap`.
inline double thinning_time(const Potential& pot, const IntensitySpec& spec, const Vec& x, const Vec& v, int i,
                            double cap, Philox& rng, std::uint64_t& proposals) {
  double t = 0.0;
  while (t < cap) {
    Vec y = x + t * v;
    Vec g = pot.grad(y);
    check_finite_grad(g);
    const double a = spec.base(g(i) * v(i));
    const double b = pot.ray_bound(y, v, i, spec.window);
    const double tau = invert_affine(a, b, rng.exponential());
    if (tau > spec.window) {
      t += spec.window;
      continue;
    }
    t += tau;
    if (t >= cap) break;
    ++proposals;
    Vec z = x + t * v;
    Vec gz = pot.grad(z);
    check_finite_grad(gz);
    const double lam = spec.base(gz(i) * v(i));
    const double env = a + b * tau;
    if (lam > env * (1.0 + 1e-9) + 1e-12)
      throw NumericalError("thinning envelope violated on coordinate " + std::to_string(i) + ": rate " +
                           std::to_string(lam) + " > envelope " + std::to_string(env));
    if (rng.uniform() * env < lam) return t;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline Trajectory simulate_zigzag(const Potential& pot, const IntensitySpec& spec, const Vec& x0, const Vec& v0,
                                  double horizon, Philox& rng, EventSampler sampler = EventSampler::automatic) {
  spec.validate();
  const int d = pot.dim;
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (x0.size() != d || v0.size() != d) throw ConfigError("initial state has the wrong dimension");
  for (int i = 0; i < d; ++i)
    if (v0(i) != 1.0 && v0(i) != -1.0) throw ConfigError("velocities must lie in {-1,1}^d");
  const bool exact = sampler == EventSampler::automatic && pot.gaussian_sd && spec.kind == IntensityKind::canonical;
  const double inf = std::numeric_limits<double>::infinity();

  Trajectory tr{x0, v0, horizon, {}, 0};
  double t = 0.0;
  Vec x = x0, v = v0;
  while (true) {
    const double cap = horizon - t;
    double best = inf;
    int who = -1;
    EventType type = EventType::flip;
    if (spec.gamma > 0.0) {
      double tau = rng.exponential() / (spec.gamma * d);
      int i = int(rng.below(std::uint64_t(d)));
      if (tau < best) best = tau, who = i;
    }
    if (spec.refresh_rate > 0.0) {
      double tau = rng.exponential() / spec.refresh_rate;
      if (spec.refresh_mode == RefreshMode::per_coordinate) {
        int i = int(rng.below(std::uint64_t(d)));
        if (tau < best) best = tau, who = i;
      } else if (tau < best) {
        best = tau, who = -1, type = EventType::refresh;
      }
    }
    if (exact) {
      const Vec& sd = *pot.gaussian_sd;
      for (int i = 0; i < d; ++i) {
        double p = 1.0 / (sd(i) * sd(i));
        double tau = detail::invert_affine_positive_part(x(i) * v(i) * p, p, rng.exponential());
        if (tau < best) best = tau, who = i, type = EventType::flip;
      }
    } else {
      for (int i = 0; i < d; ++i) {
        double tau = detail::thinning_time(pot, spec, x, v, i, std::min(cap, best), rng, tr.proposals);
        if (tau < best) best = tau, who = i, type = EventType::flip;
      }
    }
    if (!(best < cap)) break;
    t += best;
    x += best * v;
    if (type == EventType::refresh) {
      for (int i = 0; i < d; ++i) v(i) = double(rng.sign());
    } else {
      v(who) = -v(who);
    }
    tr.events.push_back({t, x, v, type, who});
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Path functionals

// f(x, v) along the path. If `poly` is set, f = sum_k poly[k] x_coord^k and
// segment integrals use the antiderivative; otherwise 8-point Gauss-Legendre.
struct PathObservable {
  std::function<double(const Vec&, const Vec&)> f;
  int coord = -1;
  std::vector<double> poly;

  static PathObservable polynomial(int coord, std::vector<double> c) {
    if (c.size() > 5) throw ConfigError("closed-form path integrals support degree <= 4");
    PathObservable o;
    o.coord = coord;
    o.poly = c;
    o.f = [coord, c](const Vec& x, const Vec&) {
      double s = 0.0, p = 1.0;
      for (double a : c) s += a * p, p *= x(coord);
      return s;
    };
    return o;
  }
  static PathObservable general(std::function<double(const Vec&, const Vec&)> f) {
    PathObservable o;
    o.f = std::move(f);
    return o;
  }

  // Integral over s in [0, len] of f(x + s v, v).
  double segment(const Vec& x, const Vec& v, double len) const {
    if (len <= 0.0) return 0.0;
    if (poly.size() == 1) return poly[0] * len;
    if (!poly.empty()) {
      auto anti = [&](double y) {
        double s = 0.0, p = y;
        for (std::size_t k = 0; k < poly.size(); ++k) s += poly[k] * p / double(k + 1), p *= y;
        return s;
      };
      double a = x(coord), w = v(coord);
      if (w == 0.0) return len * f(x, v);
      return (anti(a + w * len) - anti(a)) / w;
    }
    static const stats::Quadrature gl = stats::gauss_legendre(8);
    double s = 0.0;
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      double u = 0.5 * len * (gl.nodes[k] + 1.0);
      s += gl.weights[k] * f(x + u * v, v);
    }
    return 0.5 * len * s;
  }
};

inline double trajectory_integral(const Trajectory& tr, const PathObservable& f, double from = 0.0) {
  double s = 0.0;
  tr.for_each_segment([&](double t0, const Vec& x, const Vec& v, double len) {
    double a = std::max(t0, from), b = t0 + len;
    if (b > a) s += f.segment(x + (a - t0) * v, v, b - a);
  });
  return s;
}

// Integrals of f over consecutive cells [from + k h, from + (k+1) h).
inline std::vector<double> cell_integrals(const Trajectory& tr, const PathObservable& f, double from, double h) {
  const std::size_t n = std::size_t(std::floor((tr.horizon - from) / h + 1e-9));
  std::vector<double> c(n, 0.0);
  tr.for_each_segment([&](double t0, const Vec& x, const Vec& v, double len) {
    double a = std::max(t0, from), end = std::min(t0 + len, from + double(n) * h);
    while (a < end) {
      std::size_t k = std::min(n - 1, std::size_t((a - from) / h));
      double b = std::min(end, from + double(k + 1) * h);
      if (b <= a) {  // a sits on a cell edge after rounding
        k = std::min(n - 1, k + 1);
        b = std::max(std::min(end, from + double(k + 1) * h), std::nextafter(a, end));
      }
      c[k] += f.segment(x + (a - t0) * v, v, b - a);
      a = b;
    }
  });
  return c;
}

// ---------------------------------------------------------------------------
// Continuous-time asymptotic variance

struct ContinuousVarOptions {
  double burn_in_fraction = 0.1;
  double cell = 0.05;  // discounted estimator grid
  EventSampler sampler = EventSampler::automatic;
};

struct ContinuousVarEstimate {
  double estimate = 0.0;
  double se = 0.0;
  std::vector<double> per_replicate;
  std::size_t batches = 0;
  double cell = 0.0;
};

// One trajectory's estimate. lambda = 0: batch means with floor(sqrt(T')) batches.
// lambda > 0: (2/T') double integral of exp(-lambda(t-s)) fbar(s) fbar(t) over s < t,
// with fbar replaced by its cell averages and the kernel integrated exactly per cell pair.
inline double var_from_trajectory(const Trajectory& tr, const PathObservable& f, double lambda, double from,
                                  const ContinuousVarOptions& opt, std::size_t* batches_out = nullptr) {
  if (tr.events.size() < 2) throw NumericalError("degenerate trajectory: fewer than 2 events");
  const double Tp = tr.horizon - from;
  if (lambda == 0.0) {
    std::size_t nb = std::size_t(std::floor(std::sqrt(Tp)));
    if (nb < 2) throw ConfigError("horizon too short for batch means");
    const double L = Tp / double(nb);
    auto c = cell_integrals(tr, f, from, L);
    std::vector<double> m(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) m[k] = c[k] / L;
    if (batches_out) *batches_out = nb;
    return stats::batch_means_variance(m, L);
  }
  if (!(lambda > 0.0)) throw ConfigError("lambda must be >= 0");
  const double h = opt.cell;
  auto c = cell_integrals(tr, f, from, h);
  const double Teff = double(c.size()) * h;
  double mean = 0.0;
  for (double a : c) mean += a;
  mean /= Teff;
  const double lh = lambda * h, e = std::exp(-lh);
  const double w_same = (lh - 1.0 + e) / (lambda * lambda);
  const double w_cross = std::expm1(lh) * (-std::expm1(-lh)) / (lambda * lambda);
  // I = sum_k ybar_k [w_same ybar_k + w_cross sum_{j<k} e^{-lambda (k-j) h} ybar_j].
  double I = 0.0, A = 0.0;
  for (double a : c) {
    double y = a / h - mean;
    A *= e;
    I += y * (w_same * y + w_cross * A);
    A += y;
  }
  return 2.0 * I / Teff;
}

inline ContinuousVarEstimate estimate_var_continuous(const Potential& pot, const IntensitySpec& spec,
                                                     const PathObservable& f, double T, int R, double lambda,
                                                     std::uint64_t seed, const ContinuousVarOptions& opt = {}) {
  if (R < 16) throw ConfigError("at least 16 replicates are required");
  if (!(T > 0.0)) throw ConfigError("horizon must be positive");
  const double burn = opt.burn_in_fraction * T;
  std::vector<double> est(std::size_t(R), 0.0);
  std::vector<std::size_t> nb(std::size_t(R), 0);
  parallel_for(std::size_t(R), [&](std::size_t r) {
    Philox rng(seed, r);
    Vec x0 = Vec::Zero(pot.dim), v0(pot.dim);
    for (int i = 0; i < pot.dim; ++i) v0(i) = double(rng.sign());
    auto tr = simulate_zigzag(pot, spec, x0, v0, T + burn, rng, opt.sampler);
    est[r] = var_from_trajectory(tr, f, lambda, burn, opt, &nb[r]);
  });
  auto m = stats::mean_se(est);
  return {m.mean, m.se, est, nb[0], lambda > 0.0 ? opt.cell : 0.0};
}

// ---------------------------------------------------------------------------
// Generator and Dirichlet-form quadrature

// Smooth observable on E with its x-gradient.
struct PhaseFunction {
  std::function<double(const Vec&, const Vec&)> f;
  std::function<Vec(const Vec&, const Vec&)> grad_x;  // central differences if empty

  double operator()(const Vec& x, const Vec& v) const { return f(x, v); }
  Vec gradient(const Vec& x, const Vec& v) const {
    if (grad_x) return grad_x(x, v);
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double h = 1e-6 * std::max(1.0, std::abs(x(i)));
      Vec a = x, b = x;
      a(i) += h, b(i) -= h;
      g(i) = (f(a, v) - f(b, v)) / (2 * h);
    }
    return g;
  }

  // prod_i x_i^alpha_i * prod_{i in vmask} v_i.
  static PhaseFunction monomial(std::vector<int> alpha, std::vector<int> vmask) {
    auto val = [alpha, vmask](const Vec& x, const Vec& v) {
      double s = 1.0;
      for (std::size_t i = 0; i < alpha.size(); ++i) s *= std::pow(x(Eigen::Index(i)), alpha[i]);
      for (int i : vmask) s *= v(i);
      return s;
    };
    auto grad = [alpha, vmask](const Vec& x, const Vec& v) {
      Vec g = Vec::Zero(x.size());
      double vs = 1.0;
      for (int i : vmask) vs *= v(i);
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (alpha[i] == 0) continue;
        double s = alpha[i] * std::pow(x(Eigen::Index(i)), alpha[i] - 1);
        for (std::size_t j = 0; j < alpha.size(); ++j)
          if (j != i) s *= std::pow(x(Eigen::Index(j)), alpha[j]);
        g(Eigen::Index(i)) = s * vs;
      }
      return g;
    };
    return {val, grad};
  }
};

inline Vec flip_coord(Vec v, int i) {
  v(i) = -v(i);
  return v;
}

// All of {-1,1}^d in a fixed order.
inline std::vector<Vec> velocity_set(int d) {
  std::vector<Vec> out;
  for (int m = 0; m < (1 << d); ++m) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = (m >> i) & 1 ? 1.0 : -1.0;
    out.push_back(v);
  }
  return out;
}

inline double refresh_mean(const PhaseFunction& g, const Vec& x, int d) {
  double s = 0.0;
  auto vs = velocity_set(d);
  for (const Vec& w : vs) s += g(x, w);
  return s / double(vs.size());
}

// Rates of the velocity updates at (x, v): flip_1..flip_d, then full refresh.
inline Vec component_rates(const Potential& pot, const IntensitySpec& spec, const Vec& x, const Vec& v) {
  const int d = pot.dim;
  Vec r = Vec::Zero(d + 1);
  Vec g = pot.grad(x);
  for (int i = 0; i < d; ++i) {
    r(i) = spec.flip_rate(g(i) * v(i));
    if (spec.refresh_mode == RefreshMode::per_coordinate) r(i) += spec.refresh_rate / d;
  }
  if (spec.refresh_mode == RefreshMode::full) r(d) = spec.refresh_rate;
  return r;
}

// (Lg)(x,v) = <grad_x g, v> + sum_c rate_c [R_c g - g].
inline double generator_apply(const Potential& pot, const IntensitySpec& spec, const PhaseFunction& g, const Vec& x,
                              const Vec& v) {
  const int d = pot.dim;
  Vec rates = component_rates(pot, spec, x, v);
  const double gv = g(x, v);
  double s = g.gradient(x, v).dot(v);
  for (int i = 0; i < d; ++i) s += rates(i) * (g(x, flip_coord(v, i)) - gv);
  if (rates(d) > 0.0) s += rates(d) * (refresh_mean(g, x, d) - gv);
  return s;
}

struct QuadGrid {
  int n = 32;          // nodes per dimension at the coarse level
  double lo = -8.0;    // trapezoid range for non-Gaussian potentials
  double hi = 8.0;
  double rel_tol = 1e-4;
  double abs_tol = 1e-12;  // floor for integrands that cancel to zero
};

struct QuadResult {
  double value = 0.0;
  double abs_value = 0.0;
};

// E_mu[h(x, v)] by tensor quadrature in x and exact averaging over {-1,1}^d.
inline QuadResult integrate_mu(const Potential& pot, const std::function<double(const Vec&, const Vec&)>& h, int n,
                               const QuadGrid& grid) {
  const int d = pot.dim;
  if (d > 8) throw ConfigError("quadrature supports d <= 8");
  std::vector<std::vector<double>> node_d(static_cast<std::size_t>(d)), w_d(static_cast<std::size_t>(d));
  bool product = pot.gaussian_sd.has_value();
  if (product) {
    auto q = stats::gauss_hermite(n);
    for (int i = 0; i < d; ++i)
      for (std::size_t k = 0; k < q.nodes.size(); ++k) {
        node_d[std::size_t(i)].push_back((*pot.gaussian_sd)(i) * q.nodes[k]);
        w_d[std::size_t(i)].push_back(q.weights[k]);
      }
  } else {
    const double step = (grid.hi - grid.lo) / double(n - 1);
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < n; ++k) {
        node_d[std::size_t(i)].push_back(grid.lo + k * step);
        w_d[std::size_t(i)].push_back((k == 0 || k == n - 1) ? 0.5 * step : step);
      }
  }
  auto vs = velocity_set(d);
  std::vector<int> idx(std::size_t(d), 0);
  double num = 0.0, abs_num = 0.0, norm = 0.0;
  Vec x(d);
  while (true) {
    double wt = 1.0;
    for (int i = 0; i < d; ++i) {
      x(i) = node_d[std::size_t(i)][std::size_t(idx[std::size_t(i)])];
      wt *= w_d[std::size_t(i)][std::size_t(idx[std::size_t(i)])];
    }
    if (!product) wt *= std::exp(-pot.U(x));
    double hv = 0.0;
    for (const Vec& v : vs) hv += h(x, v);
    hv /= double(vs.size());
    num += wt * hv;
    abs_num += wt * std::abs(hv);
    norm += wt;
    int i = 0;
    while (i < d && ++idx[std::size_t(i)] == n) {
      idx[std::size_t(i)] = 0;
      ++i;
    }
    if (i == d) break;
  }
  return {num / norm, abs_num / norm};
}

// integrate_mu at n and 2n nodes; errors if the two disagree beyond rel_tol * E|h| + abs_tol.
inline QuadResult integrate_mu_checked(const Potential& pot, const std::function<double(const Vec&, const Vec&)>& h,
                                       const QuadGrid& grid) {
  auto a = integrate_mu(pot, h, grid.n, grid);
  auto b = integrate_mu(pot, h, pot.gaussian_sd ? 2 * grid.n : 2 * grid.n - 1, grid);
  if (std::abs(a.value - b.value) > grid.rel_tol * b.abs_value + grid.abs_tol)
    throw NumericalError("quadrature grid too coarse: " + std::to_string(a.value) + " vs " + std::to_string(b.value));
  return b;
}

// sum_c <g, D_c [I - R_c Q] g> - <g, (sum_c D_c) [I - Q] g>, D_c = rate_{1,c} - rate_{2,c}.
inline double dirichlet_gap_quadrature(const Potential& pot, const IntensitySpec& s1, const IntensitySpec& s2,
                                       const PhaseFunction& g, const QuadGrid& grid = {}) {
  s1.validate();
  s2.validate();
  const int d = pot.dim;
  auto h = [&](const Vec& x, const Vec& v) {
    Vec D = component_rates(pot, s1, x, v) - component_rates(pot, s2, x, v);
    const double gv = g(x, v);
    const Vec mv = -v;
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += D(i) * gv * (gv - g(x, flip_coord(mv, i)));
    if (D(d) != 0.0) s += D(d) * gv * (gv - refresh_mean(g, x, d));
    s -= D.sum() * gv * (gv - g(x, mv));
    return s;
  };
  return integrate_mu_checked(pot, h, grid).value;
}

// E_mu[Lg], zero for every g in the domain when mu is invariant.
inline double stationarity_residual(const Potential& pot, const IntensitySpec& spec, const PhaseFunction& g,
                                    const QuadGrid& grid = {}) {
  auto h = [&](const Vec& x, const Vec& v) { return generator_apply(pot, spec, g, x, v); };
  return integrate_mu(pot, h, 2 * grid.n, grid).value;
}

// The 20 observables x^a v^b with x-part in {1, x1, x2, x1 x2, x1^2}, v-part in {1, v1, v2, v1 v2}.
inline std::vector<PhaseFunction> gap_basis_2d() {
  std::vector<std::vector<int>> xs{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}};
  std::vector<std::vector<int>> vs{{}, {0}, {1}, {0, 1}};
  std::vector<PhaseFunction> out;
  for (const auto& a : xs)
    for (const auto& b : vs) out.push_back(PhaseFunction::monomial(a, b));
  return out;
}

}  // namespace nonrev::zz
