#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nonrev/errors.hpp"
#include "nonrev/finite_core.hpp"
#include "nonrev/io.hpp"
#include "nonrev/kernel_zoo.hpp"
#include "nonrev/mc_estimators.hpp"
#include "nonrev/parallel.hpp"
#include "nonrev/rng.hpp"
#include "nonrev/stats.hpp"
#include "nonrev/zigzag.hpp"

namespace nonrev::exp {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::optional<std::string> target;
  std::optional<std::vector<double>> lambdas;
  std::optional<std::vector<int>> sizes;
  std::optional<std::vector<double>> thetas;
  std::optional<std::vector<double>> eps;
  std::optional<int> trials;
  std::optional<int> replicates;
  std::optional<std::uint64_t> steps;
  std::optional<std::uint64_t> samples;
  std::optional<double> horizon;
  std::optional<double> gamma;
  std::optional<double> refresh_rate;
  std::optional<double> omega;
  std::optional<double> step_size;
  std::optional<int> nleap;
  std::optional<std::string> output;
};

struct Check {
  std::string name;
  bool pass = true;
  double max_violation = -std::numeric_limits<double>::infinity();
  std::size_t rows = 0;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<io::ResultRow> rows;
  std::vector<Check> checks;
  std::vector<io::ChainRow> chains;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

// Collects rows; every checked row feeds the named check, in first-seen order.
class Recorder {
 public:
  explicit Recorder(std::string experiment) { res_.experiment = std::move(experiment); }

  // violation <= tol passes; negative violation is slack.
  void check(const std::string& name, const std::string& case_id, double lambda, double value, double se,
             std::optional<double> oracle, double violation, double tol) {
    const bool ok = std::isfinite(violation) && violation <= tol;
    res_.rows.push_back({res_.experiment, name + "/" + case_id, lambda, value, se, oracle, ok});
    auto it = index_.find(name);
    if (it == index_.end()) {
      index_[name] = res_.checks.size();
      res_.checks.push_back({name});
      it = index_.find(name);
    }
    Check& c = res_.checks[it->second];
    c.pass = c.pass && ok;
    c.max_violation = std::isnan(violation) ? std::numeric_limits<double>::infinity()
                                            : std::max(c.max_violation, violation);
    ++c.rows;
  }
  void data(const std::string& case_id, double lambda, double value, double se, std::optional<double> oracle = {}) {
    res_.rows.push_back({res_.experiment, case_id, lambda, value, se, oracle, true});
  }
  void chain(io::ChainRow r) { res_.chains.push_back(std::move(r)); }
  ExperimentResult finish() { return std::move(res_); }

 private:
  ExperimentResult res_;
  std::map<std::string, std::size_t> index_;
};

struct ExperimentInfo {
  std::string name;
  std::string description;
  bool continuous_time = false;  // lambda >= 0 instead of lambda in [0,1)
  std::vector<std::string> keys;
  std::function<ExperimentResult(const ExperimentConfig&)> run;
};

const std::vector<ExperimentInfo>& catalog();

inline const ExperimentInfo& find_experiment(const std::string& name) {
  for (const auto& e : catalog())
    if (e.name == name) return e;
  throw ConfigError("unknown experiment '" + name + "' (see `list`)");
}

namespace detail {

inline const std::vector<std::string>& all_keys() {
  static const std::vector<std::string> k{"experiment", "seed",   "target",       "lambdas", "sizes",     "thetas",
                                          "eps",        "trials", "replicates",   "steps",   "samples",   "horizon",
                                          "gamma",      "refresh_rate", "omega",  "step_size", "nleap",   "output"};
  return k;
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + key + "' has the wrong type");
  }
}

inline std::uint64_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    throw ConfigError("key '" + key + "' must be a nonnegative integer");
  return j.get<std::uint64_t>();
}

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

inline Vec random_vec(Eigen::Index n, Philox& rng) {
  Vec f(n);
  for (Eigen::Index i = 0; i < n; ++i) f(i) = rng.normal();
  return f;
}

inline std::vector<double> tenths() {
  std::vector<double> l;
  for (int k = 1; k <= 9; ++k) l.push_back(0.1 * k);
  return l;
}

inline void require_positive_lambdas(const std::vector<double>& l, const char* what) {
  for (double x : l)
    if (!(x > 0.0)) throw ConfigError(std::string(what) + " requires lambda > 0");
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& keys = detail::all_keys();
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw ConfigError("unknown key '" + it.key() + "'");
  }
  if (!j.contains("experiment")) throw ConfigError("missing key 'experiment'");
  if (!j.contains("seed")) throw ConfigError("missing key 'seed' (mandatory)");
  ExperimentConfig c;
  c.experiment = detail::get_as<std::string>(j.at("experiment"), "experiment");
  const ExperimentInfo& info = find_experiment(c.experiment);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "experiment" || k == "seed" || k == "output") continue;
    if (std::find(info.keys.begin(), info.keys.end(), k) == info.keys.end())
      throw ConfigError("key '" + k + "' does not apply to experiment '" + c.experiment + "'");
  }
  c.seed = detail::get_count(j.at("seed"), "seed");
  auto num = [&](const char* k, std::optional<double>& out) {
    if (j.contains(k)) {
      double v = detail::get_as<double>(j.at(k), k);
      if (!std::isfinite(v)) throw ConfigError(std::string("key '") + k + "' must be finite");
      out = v;
    }
  };
  auto count = [&](const char* k, auto& out) {
    if (j.contains(k)) out = static_cast<typename std::decay_t<decltype(out)>::value_type>(detail::get_count(j.at(k), k));
  };
  if (j.contains("target")) c.target = detail::get_as<std::string>(j.at("target"), "target");
  if (j.contains("output")) c.output = detail::get_as<std::string>(j.at("output"), "output");
  if (j.contains("lambdas")) c.lambdas = detail::get_as<std::vector<double>>(j.at("lambdas"), "lambdas");
  if (j.contains("sizes")) c.sizes = detail::get_as<std::vector<int>>(j.at("sizes"), "sizes");
  if (j.contains("thetas")) c.thetas = detail::get_as<std::vector<double>>(j.at("thetas"), "thetas");
  if (j.contains("eps")) c.eps = detail::get_as<std::vector<double>>(j.at("eps"), "eps");
  count("trials", c.trials);
  count("replicates", c.replicates);
  count("steps", c.steps);
  count("samples", c.samples);
  count("nleap", c.nleap);
  num("horizon", c.horizon);
  num("gamma", c.gamma);
  num("refresh_rate", c.refresh_rate);
  num("omega", c.omega);
  num("step_size", c.step_size);

  if (c.lambdas) {
    if (c.lambdas->empty()) throw ConfigError("lambdas must be non-empty");
    for (double l : *c.lambdas) {
      if (info.continuous_time ? !(l >= 0.0 && std::isfinite(l)) : !(l >= 0.0 && l < 1.0))
        throw ConfigError("lambda " + detail::fmt(l) +
                          (info.continuous_time ? " must be finite and >= 0" : " outside [0,1)"));
    }
  }
  if (c.sizes) {
    if (c.sizes->empty()) throw ConfigError("sizes must be non-empty");
    for (int n : *c.sizes)
      if (n < 3) throw ConfigError("sizes must be >= 3");
  }
  if (c.thetas)
    for (double t : *c.thetas)
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("thetas must lie in [0,1]");
  if (c.eps)
    for (double e : *c.eps)
      if (!(e > 0.0 && std::isfinite(e))) throw ConfigError("eps must be positive");
  if (c.trials && *c.trials < 1) throw ConfigError("trials must be >= 1");
  if (c.replicates && *c.replicates < 16) throw ConfigError("replicates must be >= 16");
  if (c.steps && *c.steps < 1000) throw ConfigError("steps must be >= 1000");
  if (c.samples && *c.samples < 100) throw ConfigError("samples must be >= 100");
  if (c.nleap && *c.nleap < 1) throw ConfigError("nleap must be >= 1");
  if (c.horizon && !(*c.horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (c.gamma && !(*c.gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (c.refresh_rate && !(*c.refresh_rate >= 0.0)) throw ConfigError("refresh_rate must be >= 0");
  if (c.omega && !(*c.omega > 0.0 && *c.omega <= std::numbers::pi / 2)) throw ConfigError("omega outside (0, pi/2]");
  if (c.step_size && !(*c.step_size > 0.0)) throw ConfigError("step_size must be positive");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::string text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  if (c.target) j["target"] = *c.target;
  if (c.lambdas) j["lambdas"] = *c.lambdas;
  if (c.sizes) j["sizes"] = *c.sizes;
  if (c.thetas) j["thetas"] = *c.thetas;
  if (c.eps) j["eps"] = *c.eps;
  if (c.trials) j["trials"] = *c.trials;
  if (c.replicates) j["replicates"] = *c.replicates;
  if (c.steps) j["steps"] = *c.steps;
  if (c.samples) j["samples"] = *c.samples;
  if (c.horizon) j["horizon"] = *c.horizon;
  if (c.gamma) j["gamma"] = *c.gamma;
  if (c.refresh_rate) j["refresh_rate"] = *c.refresh_rate;
  if (c.omega) j["omega"] = *c.omega;
  if (c.step_size) j["step_size"] = *c.step_size;
  if (c.nleap) j["nleap"] = *c.nleap;
  if (c.output) j["output"] = *c.output;
  return j;
}

// ---------------------------------------------------------------------------
// Targets

namespace detail {

// "ring(w1,...,wn)" or "random-ring(n)" with weights 0.5 + U(0,1) drawn from the seed.
inline RingTarget ring_target(const ExperimentConfig& c, const std::string& fallback) {
  auto t = io::parse_target(c.target.value_or(fallback));
  if (t.name == "ring") {
    Vec w = Eigen::Map<const Vec>(t.args.data(), Eigen::Index(t.args.size()));
    try {
      return RingTarget(w);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (t.name == "random-ring") {
    if (t.args.size() != 1 || t.args[0] < 3 || t.args[0] != std::floor(t.args[0]))
      throw ConfigError("random-ring(n) needs an integer n >= 3");
    Philox rng(c.seed, 0xfeedULL);
    Vec w(Eigen::Index(t.args[0]));
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 0.5 + rng.uniform();
    return RingTarget(w);
  }
  throw ConfigError("target '" + t.name + "' is not a ring target");
}

inline SeparableHamiltonian hamiltonian(const ExperimentConfig& c) {
  auto t = io::parse_target(c.target.value_or("gaussian(1)"));
  if (t.name == "gaussian" && t.args.size() == 1 && t.args[0] > 0.0) return SeparableHamiltonian::gaussian(t.args[0]);
  if (t.name == "double-well" && t.args.size() == 2 && t.args[0] > 0.0)
    return SeparableHamiltonian::double_well(t.args[0], t.args[1]);
  throw ConfigError("target must be gaussian(s) or double-well(a,b)");
}

inline zz::Potential potential(const ExperimentConfig& c, const std::string& fallback) {
  auto t = io::parse_target(c.target.value_or(fallback));
  if (t.name == "gaussian" && !t.args.empty() && t.args.size() <= 8)
    return zz::Potential::gaussian(Eigen::Map<const Vec>(t.args.data(), Eigen::Index(t.args.size())));
  if (t.name == "double-well" && (t.args.size() == 2 || t.args.size() == 3)) {
    int d = t.args.size() == 3 ? int(t.args[2]) : 1;
    return zz::Potential::double_well(d, t.args[0], t.args[1]);
  }
  throw ConfigError("target must be gaussian(s1,...,sd) or double-well(a,b[,d])");
}

// ---------------------------------------------------------------------------
// Structural residuals

inline double invariance_residual(const KernelMatrix& P, const FiniteDistribution& mu) {
  return (mu.weights().transpose() * P.mat() - mu.weights().transpose()).cwiseAbs().maxCoeff();
}

// max |mu(z)P(z,w) - mu(w)P(xi w, xi z)|
inline double skew_balance_residual(const KernelMatrix& P, const FiniteDistribution& mu,
                                    const DeterministicInvolution& Q) {
  double r = 0.0;
  for (Eigen::Index z = 0; z < P.size(); ++z)
    for (Eigen::Index w = 0; w < P.size(); ++w) r = std::max(r, std::abs(mu(z) * P(z, w) - mu(w) * P(Q(w), Q(z))));
  return r;
}

inline double detailed_balance_residual(const KernelMatrix& S, const FiniteDistribution& mu) {
  double r = 0.0;
  for (Eigen::Index z = 0; z < S.size(); ++z)
    for (Eigen::Index w = z + 1; w < S.size(); ++w) r = std::max(r, std::abs(mu(z) * S(z, w) - mu(w) * S(w, z)));
  return r;
}

struct NamedSystem {
  std::string name;
  KernelMatrix P;
  FiniteDistribution mu;
  DeterministicInvolution Q;
};

inline std::vector<NamedSystem> ring_constructors(Eigen::Index n, Philox& rng) {
  Vec w(n);
  for (Eigen::Index i = 0; i < n; ++i) w(i) = 0.5 + rng.uniform();
  RingTarget t(w);
  auto mu = t.lifted_mu();
  auto Q = velocity_flip(n);
  auto id = DeterministicInvolution::identity(n);
  auto flow = ring_shift_flow(n);
  std::vector<NamedSystem> out;
  auto g = gustafson_ring(t);
  out.push_back({"gustafson", g.P, g.mu, g.Q});
  out.push_back({"flow-metropolis", metropolized_flow_finite(mu, flow, Q, AcceptanceRule::metropolis()), mu, Q});
  out.push_back({"flow-barker", metropolized_flow_finite(mu, flow, Q, AcceptanceRule::barker()), mu, Q});
  for (int K = 1; K <= 3; ++K)
    out.push_back({"extra-chance-K" + std::to_string(K), extra_chance_finite(mu, flow, Q, K), mu, Q});
  out.push_back({"refresh", refresh_kernel(n, 0.3), mu, Q});
  auto mh = mh_subkernels(t, ring_shift_proposal(n, 1), ring_shift_proposal(n, -1));
  for (auto [name, r] : {std::pair{"minimal", SwitchingRate::minimal()}, std::pair{"convex", SwitchingRate::convex(0.5)},
                         std::pair{"maximal", SwitchingRate::maximal()}}) {
    auto L = lifted_kernel(mh, r);
    out.push_back({std::string("lifted-mh-") + name, L.P, L.mu, L.Q});
  }
  out.push_back({"collapsed-mh", collapsed_kernel(mh), t.pi(), id});
  const Eigen::Index m = (n - 1) / 2;
  auto gw = guided_walk_ring(t, Vec::Constant(m, 1.0 / double(m)));
  for (auto [name, r] : {std::pair{"minimal", SwitchingRate::minimal()}, std::pair{"maximal", SwitchingRate::maximal()}}) {
    auto L = lifted_kernel(gw, r);
    out.push_back({std::string("lifted-guided-") + name, L.P, L.mu, L.Q});
  }
  out.push_back({"random-walk", collapsed_kernel(gw), t.pi(), id});
  auto [T2, pi] = random_positive_reversible(n, rng);
  auto ns = neal_pair_kernels(T2, pi);
  out.push_back({"pair-P1", ns.P1, ns.mu_pair, ns.Q_swap});
  out.push_back({"pair-P2", ns.P2, ns.mu_pair, ns.Q_swap});
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Finite-state experiments

inline ExperimentResult run_gustafson_ring(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  const double tol = tol::structural;
  for (int n : c.sizes.value_or(std::vector<int>{3, 5, 8})) {
    Philox rng(c.seed, std::uint64_t(n));
    for (const auto& s : detail::ring_constructors(n, rng)) {
      const std::string id = s.name + "/n=" + std::to_string(n);
      double inv = detail::invariance_residual(s.P, s.mu);
      rec.check("invariance", id, NAN, inv, 0.0, 0.0, check_invariance(s.P, s.mu) ? inv : std::max(inv, 1.0), tol);
      double skew = detail::skew_balance_residual(s.P, s.mu, s.Q);
      rec.check("muQ-reversibility", id, NAN, skew, 0.0, 0.0,
                check_muQ_reversible(s.P, s.mu, s.Q) ? skew : std::max(skew, 1.0), tol);
      auto parts = reversible_parts(s.P, s.Q);
      double db = std::max(detail::detailed_balance_residual(parts.QP, s.mu),
                           detail::detailed_balance_residual(parts.PQ, s.mu));
      bool lib = check_mu_reversible(parts.QP, s.mu) && check_mu_reversible(parts.PQ, s.mu);
      rec.check("reversible-parts-detailed-balance", id, NAN, db, 0.0, 0.0, lib ? db : std::max(db, 1.0), tol);
    }
  }
  return rec.finish();
}

inline ExperimentResult run_ordering_random(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  const auto lambdas = c.lambdas.value_or(lambda_grid_005());
  const auto sizes = c.sizes.value_or(std::vector<int>{4, 6, 8, 10});
  const int pairs = c.trials.value_or(50);
  for (int i = 0; i < pairs; ++i) {
    const int n = sizes[std::size_t(i) % sizes.size()];
    const Side side = i % 2 ? Side::right : Side::left;
    Philox rng(c.seed, std::uint64_t(i));
    auto pr = random_dominated_pair(n, side, rng);
    const std::string id = "pair" + std::to_string(i) + "/n=" + std::to_string(n) + (i % 2 ? "/right" : "/left");
    auto cert = dirichlet_dominance_certificate(pr.P1, pr.P2, pr.mu, pr.Q, side);
    rec.check("dominance-certificate", id, NAN, cert.dominance_matrix_min_eig, 0.0, {}, -cert.dominance_matrix_min_eig,
              tol::psd);
    auto rep = verify_ordering_theorem(pr.P1, pr.P2, pr.mu, pr.Q, lambdas, 20, rng.next_u64());
    rec.check("symmetric-f-ordering", id, NAN, rep.max_violation_plus, 0.0, {}, rep.max_violation_plus, 1e-9);
    rec.check("antisymmetric-f-reversed", id, NAN, rep.max_violation_minus, 0.0, {}, rep.max_violation_minus, 1e-9);
  }
  return rec.finish();
}

inline ExperimentResult run_lifted_ordering(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  auto t = detail::ring_target(c, "ring(1,2,3,2,1)");
  const Eigen::Index n = t.n();
  const auto lambdas = c.lambdas.value_or(lambda_grid_005());
  const auto thetas = c.thetas.value_or(std::vector<double>{0.25, 0.5, 0.75});
  const int trials = c.trials.value_or(20);
  Philox rng(c.seed, 0);
  std::vector<Vec> fs;
  for (int i = 0; i < trials; ++i) fs.push_back(detail::random_vec(n, rng));

  auto mh = mh_subkernels(t, ring_shift_proposal(n, 1), ring_shift_proposal(n, -1));
  std::vector<std::pair<std::string, KernelSystem>> sys{{"minimal", lifted_kernel(mh, SwitchingRate::minimal())}};
  for (double th : thetas) sys.push_back({"convex(" + detail::fmt(th) + ")", lifted_kernel(mh, SwitchingRate::convex(th))});
  sys.push_back({"maximal", lifted_kernel(mh, SwitchingRate::maximal())});
  const KernelMatrix coll = collapsed_kernel(mh);

  const Eigen::Index m = std::min<Eigen::Index>(2, (n - 1) / 2);
  Vec q = m == 2 ? Vec((Vec(2) << 0.6, 0.4).finished()) : Vec::Ones(1);
  auto gw = guided_walk_ring(t, q);
  auto lgrw = lifted_kernel(gw, SwitchingRate::minimal());
  auto grw = lifted_kernel(gw, SwitchingRate::maximal());
  const KernelMatrix rw = collapsed_kernel(gw);

  for (double l : lambdas) {
    // var[k][i]: lifted system k, observable i.
    std::vector<std::vector<double>> var(sys.size(), std::vector<double>(fs.size()));
    for (std::size_t k = 0; k < sys.size(); ++k) {
      Resolvent r(sys[k].second.P, sys[k].second.mu, l);
      for (std::size_t i = 0; i < fs.size(); ++i) var[k][i] = r.var(lift_observable(fs[i]));
    }
    Resolvent rc(coll, t.pi(), l);
    std::vector<double> vc(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) vc[i] = rc.var(fs[i]);
    auto maxdiff = [&](const std::vector<double>& a, const std::vector<double>& b) {
      double d = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, a[i] - b[i]);
      return d;
    };
    const std::size_t last = sys.size() - 1;
    for (std::size_t k = 1; k < last; ++k) {
      double d1 = maxdiff(var[0], var[k]);
      rec.check("minimal<=convex", sys[k].first, l, d1, 0.0, {}, d1, 1e-9);
      double d2 = maxdiff(var[k], var[last]);
      rec.check("convex<=maximal", sys[k].first, l, d2, 0.0, {}, d2, 1e-9);
    }
    for (std::size_t k = 0; k < sys.size(); ++k) {
      double d = maxdiff(var[k], vc);
      rec.check("lifted<=collapsed", sys[k].first, l, d, 0.0, {}, d, 1e-9);
    }
    Resolvent ra(lgrw.P, lgrw.mu, l), rb(grw.P, grw.mu, l), rr(rw, t.pi(), l);
    std::vector<double> va(fs.size()), vb(fs.size()), vr(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) {
      va[i] = ra.var(lift_observable(fs[i]));
      vb[i] = rb.var(lift_observable(fs[i]));
      vr[i] = rr.var(fs[i]);
    }
    double d1 = maxdiff(va, vb), d2 = maxdiff(vb, vr);
    rec.check("lifted-guided<=guided", "m=" + std::to_string(m), l, d1, 0.0, {}, d1, 1e-9);
    rec.check("guided<=random-walk", "m=" + std::to_string(m), l, d2, 0.0, {}, d2, 1e-9);
  }
  return rec.finish();
}

namespace detail {

struct PairInstance {
  int n;
  NealSystem sys;
  FiniteDistribution pi;
  std::vector<Vec> fs;
};

inline std::vector<PairInstance> pair_instances(const ExperimentConfig& c) {
  std::vector<PairInstance> out;
  for (int n : c.sizes.value_or(std::vector<int>{3, 5})) {
    Philox rng(c.seed, std::uint64_t(n));
    auto [T2, pi] = random_positive_reversible(n, rng);
    PairInstance p{n, neal_pair_kernels(T2, pi), pi, {}};
    for (int i = 0; i < c.trials.value_or(20); ++i) p.fs.push_back(random_vec(n, rng));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace detail

inline ExperimentResult run_neal_identity(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  const auto lambdas = c.lambdas.value_or(detail::tenths());
  detail::require_positive_lambdas(lambdas, "the pair-chain variance identity");
  for (const auto& p : detail::pair_instances(c))
    for (double l : lambdas)
      for (int k = 1; k <= 2; ++k) {
        const KernelMatrix& P = k == 1 ? p.sys.P1 : p.sys.P2;
        Resolvent r(P, p.sys.mu_pair, l);
        double worst = 0.0;
        for (const Vec& f : p.fs) {
          double lhs = r.var(p.sys.sum(f));
          double rhs = -(1 - l * l) / l * norm2_centered(f, p.pi) + (1 + l) * (1 + l) / l * r.var(p.sys.first(f));
          worst = std::max(worst, std::abs(lhs - rhs));
        }
        rec.check("variance-identity", "n=" + std::to_string(p.n) + "/P" + std::to_string(k), l, worst, 0.0, 0.0, worst,
                  1e-9);
      }
  return rec.finish();
}

inline ExperimentResult run_neal_ordering(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  const auto lambdas = c.lambdas.value_or(detail::tenths());
  for (const auto& p : detail::pair_instances(c)) {
    const std::string id = "n=" + std::to_string(p.n);
    auto cert = dirichlet_dominance_certificate(p.sys.P1, p.sys.P2, p.sys.mu_pair, p.sys.Q_swap, Side::left);
    rec.check("dominance-certificate", id, NAN, cert.dominance_matrix_min_eig, 0.0, {}, -cert.dominance_matrix_min_eig,
              tol::psd);
    for (double l : lambdas) {
      Resolvent r1(p.sys.P1, p.sys.mu_pair, l), r2(p.sys.P2, p.sys.mu_pair, l);
      double d_first = -std::numeric_limits<double>::infinity(), d_sum = d_first;
      for (const Vec& f : p.fs) {
        d_first = std::max(d_first, r1.var(p.sys.first(f)) - r2.var(p.sys.first(f)));
        d_sum = std::max(d_sum, r1.var(p.sys.sum(f)) - r2.var(p.sys.sum(f)));
      }
      rec.check("second-order-T1<=T2", id, l, d_first, 0.0, {}, d_first, 1e-9);
      rec.check("pair-symmetric-P1<=P2", id, l, d_sum, 0.0, {}, d_sum, 1e-9);
    }
  }
  return rec.finish();
}

inline ExperimentResult run_two_cycle_extra_chance(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  const auto lambdas = c.lambdas.value_or(lambda_grid_005());
  detail::require_positive_lambdas(lambdas, "the 2-cycle identities");
  const int trials = c.trials.value_or(10);

  struct Inst {
    DominatedPair pr;
    Vec f;
  };
  std::vector<Inst> inst;
  for (int i = 0; i < trials; ++i) {
    Philox rng(c.seed, std::uint64_t(i));
    auto pr = random_dominated_pair(8, i % 2 ? Side::right : Side::left, rng);
    Vec f = project_symmetric(detail::random_vec(8, rng), pr.Q, 1);
    inst.push_back({std::move(pr), std::move(f)});
  }

  auto t = detail::ring_target(c, "ring(1,3,2,5,1,4,2)");
  const Eigen::Index n = t.n();
  auto mu = t.lifted_mu();
  auto Q = velocity_flip(n);
  auto R = refresh_kernel(n, c.refresh_rate.value_or(0.3));
  std::vector<KernelMatrix> PK;
  for (int K = 1; K <= 3; ++K) PK.push_back(extra_chance_finite(mu, ring_shift_flow(n), Q, K));
  Philox frng(c.seed, 1000);
  std::vector<Vec> fs;
  for (int i = 0; i < trials; ++i) fs.push_back(lift_observable(detail::random_vec(n, frng)));

  for (int K = 1; K < 3; ++K) {
    auto cert = dirichlet_dominance_certificate(PK[K], PK[K - 1], mu, Q, Side::right);
    rec.check("extra-chance-dirichlet-monotone", "K=" + std::to_string(K + 1) + "-vs-" + std::to_string(K), NAN,
              cert.dominance_matrix_min_eig, 0.0, {}, -cert.dominance_matrix_min_eig, tol::psd);
  }

  for (double l : lambdas) {
    double flip_id = 0.0, swap_id = 0.0;
    for (const auto& in : inst) {
      const auto& pr = in.pr;
      KernelMatrix Qk = pr.Q.kernel();
      const double n2 = norm2_centered(in.f, pr.mu);
      // {Q, QP} runs P on every second step.
      for (const KernelMatrix* P : {&pr.P1, &pr.P2}) {
        KernelMatrix S(pr.Q.left(P->mat()));
        double cyc = var_lambda_cycle(in.f, Qk, S, pr.mu, l);
        double hom = (2 + l + 1 / l) / 2 * var_lambda(in.f, *P, pr.mu, l * l) + (l - 1 / l) / 2 * n2;
        flip_id = std::max(flip_id, std::abs(cyc - hom));
      }
      KernelMatrix P1Q(pr.Q.right(pr.P1.mat())), QP2(pr.Q.left(pr.P2.mat()));
      double a = var_lambda_cycle(in.f, pr.P1, pr.P2, pr.mu, l);
      double b = var_lambda_cycle(in.f, P1Q, QP2, pr.mu, l);
      swap_id = std::max(swap_id, std::abs(a - b));
    }
    rec.check("flip-cycle-identity", "random-pairs", l, flip_id, 0.0, 0.0, flip_id, 1e-9);
    rec.check("involution-shift-identity", "random-pairs", l, swap_id, 0.0, 0.0, swap_id, 1e-9);

    for (int K = 1; K < 3; ++K) {
      double dc = -std::numeric_limits<double>::infinity(), dp = dc;
      KernelMatrix hi = compose(R, PK[K]), lo = compose(R, PK[K - 1]);
      for (const Vec& f : fs) {
        dc = std::max(dc, var_lambda_cycle(f, R, PK[K], mu, l) - var_lambda_cycle(f, R, PK[K - 1], mu, l));
        dp = std::max(dp, var_lambda(f, hi, mu, l) - var_lambda(f, lo, mu, l));
      }
      const std::string id = "K=" + std::to_string(K + 1) + "-vs-" + std::to_string(K);
      rec.check("extra-chance-cycle-nonincreasing", id, l, dc, 0.0, {}, dc, 1e-9);
      rec.check("extra-chance-product-nonincreasing", id, l, dp, 0.0, {}, dp, 1e-9);
    }
  }
  return rec.finish();
}

// ---------------------------------------------------------------------------
// Monte Carlo experiments

inline ExperimentResult run_ghmc_phi_compare(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  // Finite version: refresh then metropolized ring shift, exact solves.
  {
    RingTarget t((Vec(5) << 1, 2, 3, 2, 1).finished());
    auto mu = t.lifted_mu();
    auto Q = velocity_flip(5);
    auto R = refresh_kernel(5, c.refresh_rate.value_or(0.7));
    auto Pm = metropolized_flow_finite(mu, ring_shift_flow(5), Q, AcceptanceRule::metropolis());
    auto Pb = metropolized_flow_finite(mu, ring_shift_flow(5), Q, AcceptanceRule::barker());
    auto cert = dirichlet_dominance_certificate(Pm, Pb, mu, Q, Side::right);
    rec.check("finite-dominance-certificate", "ring5", NAN, cert.dominance_matrix_min_eig, 0.0, {},
              -cert.dominance_matrix_min_eig, tol::psd);
    Philox rng(c.seed, 1u << 20);
    std::vector<Vec> fs;
    for (int i = 0; i < c.trials.value_or(20); ++i) fs.push_back(lift_observable(detail::random_vec(5, rng)));
    KernelMatrix RPm = compose(R, Pm), RPb = compose(R, Pb);
    for (double l : lambda_grid_005()) {
      double dc = -std::numeric_limits<double>::infinity(), dp = dc;
      for (const Vec& f : fs) {
        dc = std::max(dc, var_lambda_cycle(f, R, Pm, mu, l) - var_lambda_cycle(f, R, Pb, mu, l));
        dp = std::max(dp, var_lambda(f, RPm, mu, l) - var_lambda(f, RPb, mu, l));
      }
      rec.check("finite-cycle-metropolis<=barker", "ring5", l, dc, 0.0, {}, dc, 1e-9);
      rec.check("finite-product-metropolis<=barker", "ring5", l, dp, 0.0, {}, dp, 1e-9);
    }
  }
  // Continuous GHMC with common random numbers across rules.
  RuleComparisonConfig rc;
  rc.H = detail::hamiltonian(c);
  rc.omega = c.omega.value_or(std::numbers::pi / 4);
  rc.step = c.step_size.value_or(1.2);
  rc.nleap = c.nleap.value_or(1);
  rc.lambdas = c.lambdas.value_or(std::vector<double>{0.5, 0.9, 0.99});
  rc.replicates = c.replicates.value_or(16);
  rc.steps = c.steps.value_or(1000000);
  rc.seed = c.seed;
  rc.observables = {{"x^2", [](double x) { return x * x; }}, {"|x|", [](double x) { return std::abs(x); }}};
  auto rep = compare_acceptance_rules(rc);
  for (std::size_t a = 0; a < rc.rules.size(); ++a)
    rec.data("rejection-rate/" + rc.rules[a].kind, NAN, rep.rejection_rate[a], 0.0);
  for (const auto& row : rep.rows) {
    const auto &m = row.per_rule[0], &b = row.per_rule[1];
    for (std::size_t a = 0; a < rc.rules.size(); ++a) {
      const auto& s = row.per_rule[a];
      rec.data("estimate/" + row.observable + "/" + rc.rules[a].kind, row.lambda, s.estimate, s.se);
      rec.chain({c.experiment + "/" + rc.rules[a].kind + "/" + row.observable, row.lambda, s.estimate, s.se,
                 rc.replicates, rc.steps, c.seed});
    }
    double se = std::hypot(m.se, b.se);
    rec.check("ghmc-metropolis<=barker+2se", row.observable, row.lambda, m.estimate - b.estimate, se, {},
              m.estimate - b.estimate - 2.0 * se, 0.0);
  }
  // Full versus partial refresh: Monte Carlo against closed forms.
  Philox wrng(c.seed, 1u << 21);
  for (const auto& w : refresh_comparison_witnesses(rc.omega, rc.H.sigma2, c.samples.value_or(1000000), wrng))
    rec.check("refresh-witness", "g=" + w.g, NAN, w.estimate, w.se, w.exact, std::abs(w.estimate - w.exact) - 4 * w.se,
              0.0);
  return rec.finish();
}

inline ExperimentResult run_phi_eps_bounds(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  const auto eps = c.eps.value_or(std::vector<double>{0.1, 1.0});
  const std::vector<double> rs{0.05, 0.2, 0.5, 0.8, 1.0, 1.25, 2.0, 4.0, 10.0, 20.0};
  std::vector<double> fine;
  for (int k = -30; k <= 30; ++k) fine.push_back(std::pow(10.0, k / 10.0));

  for (double e : eps) {
    double sym = 0.0, lower = -std::numeric_limits<double>::infinity(), upper = lower;
    for (double r : fine) {
      double p = zz::phi_eps(e, r);
      sym = std::max(sym, std::abs(r * zz::phi_eps(e, 1.0 / r) - p));
      double p0 = std::min(1.0, r), gap = p0 - p;
      lower = std::max(lower, -gap / p0);
      upper = std::max(upper, gap / p0 - std::sqrt(std::expm1(e)));
    }
    rec.check("symmetry", "eps=" + detail::fmt(e), NAN, sym, 0.0, 0.0, sym, 1e-10);
    rec.check("approximation-lower", "eps=" + detail::fmt(e), NAN, lower, 0.0, {}, lower, 1e-15);
    rec.check("approximation-upper", "eps=" + detail::fmt(e), NAN, upper, 0.0, {}, upper, 0.0);
  }
  std::vector<double> chain{0.001, 0.01, 0.1, 0.5, 1.0, 2.0};
  chain.insert(chain.end(), eps.begin(), eps.end());
  std::sort(chain.begin(), chain.end());
  chain.erase(std::unique(chain.begin(), chain.end()), chain.end());
  double prev_e = 0.0;
  for (double e : chain) {
    double d = -std::numeric_limits<double>::infinity();
    for (double r : fine) d = std::max(d, zz::phi_eps(e, r) - zz::phi_eps(prev_e, r));
    rec.check("monotone-in-eps", "eps=" + detail::fmt(prev_e) + "->" + detail::fmt(e), NAN, d, 0.0, {}, d, 1e-15);
    prev_e = e;
  }

  // E min{1, r exp(-eps/2 + sqrt(eps) Z)} by plain Monte Carlo, one stream per grid point.
  const std::uint64_t N = c.samples.value_or(10000000);
  std::vector<std::pair<double, double>> pts;
  for (double e : eps)
    for (double r : rs) pts.push_back({e, r});
  std::vector<stats::MeanSE> mc(pts.size());
  parallel_for(pts.size(), [&](std::size_t k) {
    Philox rng(c.seed, k);
    const double e = pts[k].first, r = pts[k].second, se = std::sqrt(e);
    double s = 0.0, s2 = 0.0;
    for (std::uint64_t i = 0; i < N; ++i) {
      double y = std::min(1.0, r * std::exp(-e / 2 + se * rng.normal()));
      s += y;
      s2 += y * y;
    }
    double m = s / double(N);
    double var = std::max(0.0, (s2 - double(N) * m * m) / double(N - 1));
    mc[k].mean = m;
    mc[k].se = std::sqrt(var / double(N));
  });
  // The floor covers grid points where every draw saturates at 1 and the SE vanishes.
  for (std::size_t k = 0; k < pts.size(); ++k) {
    double closed = zz::phi_eps(pts[k].first, pts[k].second);
    rec.check("monte-carlo-agreement", "eps=" + detail::fmt(pts[k].first) + "/r=" + detail::fmt(pts[k].second), NAN,
              closed, mc[k].se, mc[k].mean, std::abs(closed - mc[k].mean) - 4.0 * mc[k].se, 1e-12);
  }
  return rec.finish();
}

inline ExperimentResult run_zigzag_moments(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  auto pot = detail::potential(c, "gaussian(1)");
  if (!pot.gaussian_sd || pot.dim != 1) throw ConfigError("zigzag-gaussian-moments needs a 1D gaussian(s) target");
  const double s = (*pot.gaussian_sd)(0);
  const double T = c.horizon.value_or(1e5), burn = 0.1 * T;
  const int R = c.replicates.value_or(16);
  std::vector<std::vector<double>> m(4, std::vector<double>(std::size_t(R)));
  parallel_for(std::size_t(R), [&](std::size_t r) {
    Philox rng(c.seed, r);
    Vec v0 = Vec::Constant(1, double(rng.sign()));
    auto tr = zz::simulate_zigzag(pot, zz::IntensitySpec::canonical(), Vec::Zero(1), v0, T + burn, rng);
    for (int k = 1; k <= 4; ++k) {
      std::vector<double> poly(std::size_t(k) + 1, 0.0);
      poly[std::size_t(k)] = 1.0;
      m[std::size_t(k - 1)][r] = zz::trajectory_integral(tr, zz::PathObservable::polynomial(0, poly), burn) / T;
    }
  });
  const double exact[4] = {0.0, s * s, 0.0, 3.0 * s * s * s * s};
  for (int k = 0; k < 4; ++k) {
    auto ms = stats::mean_se(m[std::size_t(k)]);
    rec.check("occupation-moment", "k=" + std::to_string(k + 1), NAN, ms.mean, ms.se, exact[k],
              std::abs(ms.mean - exact[k]) - 3.0 * ms.se, 0.0);
  }
  // First event time from (x0, +1): thinning against exact inversion and the closed-form law.
  const std::uint64_t N = c.samples.value_or(100000);
  const double p = 1.0 / (s * s);
  int stream = 0;
  for (double x0 : {-1.3 * s, 0.0, 0.8 * s}) {
    std::vector<double> ex(N), th(N);
    Philox a(c.seed, (1u << 20) + std::uint64_t(stream)), b(c.seed, (1u << 21) + std::uint64_t(stream));
    ++stream;
    const double h = 12.0 * s + std::abs(x0);
    for (std::uint64_t i = 0; i < N; ++i) {
      auto t1 = zz::simulate_zigzag(pot, zz::IntensitySpec::canonical(), Vec::Constant(1, x0), Vec::Ones(1), h, a);
      auto t2 = zz::simulate_zigzag(pot, zz::IntensitySpec::canonical(), Vec::Constant(1, x0), Vec::Ones(1), h, b,
                                    zz::EventSampler::thinning);
      ex[i] = t1.events.front().t;
      th[i] = t2.events.front().t;
    }
    // Integrated rate p (x0 + t)_+ from 0 to t.
    auto cdf = [x0, p](double t) {
      double u = x0 >= 0.0 ? x0 * t + 0.5 * t * t : 0.5 * std::pow(std::max(0.0, t + x0), 2);
      return -std::expm1(-p * u);
    };
    const double crit1 = 1.63 / std::sqrt(double(N)), crit2 = 1.63 * std::sqrt(2.0 / double(N));
    const std::string id = "x0=" + detail::fmt(x0);
    double d2 = stats::ks_two_sample(ex, th);
    rec.check("ks-thinning-vs-exact", id, NAN, d2, 0.0, crit2, d2 - crit2, 0.0);
    double d1 = stats::ks_one_sample(th, cdf);
    rec.check("ks-thinning-vs-law", id, NAN, d1, 0.0, crit1, d1 - crit1, 0.0);
    double d0 = stats::ks_one_sample(ex, cdf);
    rec.check("ks-exact-vs-law", id, NAN, d0, 0.0, crit1, d0 - crit1, 0.0);
  }
  return rec.finish();
}

namespace detail {

inline double double_factorial_odd(int k) {  // (k-1)!! for even k, E Z^k
  double r = 1.0;
  for (int j = k - 1; j > 1; j -= 2) r *= j;
  return k % 2 ? 0.0 : r;
}

inline void compare_variances(Recorder& rec, const std::string& check, const std::string& obs, double lambda,
                              const zz::ContinuousVarEstimate& better, const zz::ContinuousVarEstimate& worse,
                              const std::string& nb, const std::string& nw, const ExperimentConfig& c, double T, int R) {
  rec.data("estimate/" + obs + "/" + nb, lambda, better.estimate, better.se);
  rec.data("estimate/" + obs + "/" + nw, lambda, worse.estimate, worse.se);
  rec.chain({c.experiment + "/" + nb + "/" + obs, lambda, better.estimate, better.se, R, std::size_t(T), c.seed});
  rec.chain({c.experiment + "/" + nw + "/" + obs, lambda, worse.estimate, worse.se, R, std::size_t(T), c.seed});
  double se = std::hypot(better.se, worse.se);
  rec.check(check, obs, lambda, better.estimate - worse.estimate, se, {}, better.estimate - worse.estimate - 2.0 * se,
            0.0);
}

}  // namespace detail

inline ExperimentResult run_zigzag_1d_gamma(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  auto pot = detail::potential(c, "gaussian(1)");
  if (pot.dim != 1) throw ConfigError("zigzag-1d-gamma needs a 1D target");
  const double gamma = c.gamma.value_or(0.5);
  auto base = zz::IntensitySpec::canonical();
  auto extra = zz::IntensitySpec::canonical_plus_gamma(gamma);
  // Closed form of the gap for g = x^a v^b on a Gaussian: gamma/2 E|g - Qg|^2 = 2 gamma b E x^{2a}.
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 2; ++b) {
      auto g = zz::PhaseFunction::monomial({a}, b ? std::vector<int>{0} : std::vector<int>{});
      double gap = zz::dirichlet_gap_quadrature(pot, base, extra, g);
      const std::string id = "x^" + std::to_string(a) + (b ? "*v" : "");
      rec.check("dirichlet-gap-nonnegative", id, NAN, gap, 0.0, {}, -gap, 1e-12);
      if (pot.gaussian_sd) {
        double s = (*pot.gaussian_sd)(0);
        double oracle = 2.0 * gamma * b * detail::double_factorial_odd(2 * a) * std::pow(s, 2 * a);
        rec.check("dirichlet-gap-closed-form", id, NAN, gap, 0.0, oracle, std::abs(gap - oracle), 1e-9);
      }
    }
  const double T = c.horizon.value_or(1e5);
  const int R = c.replicates.value_or(16);
  auto x = zz::PathObservable::polynomial(0, {0, 1});
  for (double l : c.lambdas.value_or(std::vector<double>{0.0})) {
    auto a = zz::estimate_var_continuous(pot, base, x, T, R, l, c.seed);
    auto b = zz::estimate_var_continuous(pot, extra, x, T, R, l, c.seed);
    detail::compare_variances(rec, "canonical<=canonical+gamma+2se", "x", l, a, b, "canonical",
                              "canonical+gamma=" + detail::fmt(gamma), c, T, R);
  }
  return rec.finish();
}

inline ExperimentResult run_zigzag_2d_refresh(const ExperimentConfig& c) {
  Recorder rec(c.experiment);
  auto pot = detail::potential(c, "gaussian(1,1)");
  if (pot.dim != 2) throw ConfigError("zigzag-2d-refresh needs a 2D target");
  const double gbar = c.refresh_rate.value_or(1.0);
  auto partial = zz::IntensitySpec::canonical().with_refresh(gbar, zz::RefreshMode::per_coordinate);
  auto full = zz::IntensitySpec::canonical().with_refresh(gbar, zz::RefreshMode::full);
  auto basis = zz::gap_basis_2d();
  const std::vector<std::pair<std::vector<int>, std::string>> xs{
      {{0, 0}, "1"}, {{1, 0}, "x1"}, {{0, 1}, "x2"}, {{1, 1}, "x1*x2"}, {{2, 0}, "x1^2"}};
  const std::vector<std::string> vs{"1", "v1", "v2", "v1*v2"};
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const auto& [alpha, xname] = xs[k / vs.size()];
    const std::string id = xname + "*" + vs[k % vs.size()];
    double gap = zz::dirichlet_gap_quadrature(pot, partial, full, basis[k]);
    rec.check("dirichlet-gap-nonnegative", id, NAN, gap, 0.0, {}, -gap, 1e-8);
    if (pot.gaussian_sd) {
      // gbar E[ghat_12^2], ghat_12 the v1 v2 coefficient, nonzero only for the v1 v2 column.
      double oracle = 0.0;
      if (k % vs.size() == 3) {
        oracle = gbar;
        for (int i = 0; i < 2; ++i)
          oracle *= detail::double_factorial_odd(2 * alpha[std::size_t(i)]) * std::pow((*pot.gaussian_sd)(i), 2 * alpha[std::size_t(i)]);
      }
      rec.check("dirichlet-gap-closed-form", id, NAN, gap, 0.0, oracle, std::abs(gap - oracle), 1e-9);
    }
  }
  const double T = c.horizon.value_or(1e5);
  const int R = c.replicates.value_or(16);
  const std::vector<std::pair<std::string, zz::PathObservable>> obs{
      {"x1", zz::PathObservable::polynomial(0, {0, 1})},
      {"x1*x2", zz::PathObservable::general([](const Vec& x, const Vec&) { return x(0) * x(1); })}};
  for (double l : c.lambdas.value_or(std::vector<double>{0.0}))
    for (const auto& [name, f] : obs) {
      auto a = zz::estimate_var_continuous(pot, partial, f, T, R, l, c.seed);
      auto b = zz::estimate_var_continuous(pot, full, f, T, R, l, c.seed);
      detail::compare_variances(rec, "per-coordinate<=full-refresh+2se", name, l, a, b, "per-coordinate", "full", c,
                                T, R);
    }
  return rec.finish();
}

// ---------------------------------------------------------------------------
// Catalog, in stable order

inline const std::vector<ExperimentInfo>& catalog() {
  static const std::vector<ExperimentInfo> c{
      {"gustafson-ring",
       "every ring constructor is mu-invariant and (mu,Q)-reversible with detailed-balanced reversible parts",
       false,
       {"sizes"},
       run_gustafson_ring},
      {"ordering-random",
       "ordering theorem for Dirichlet-dominated (mu,Q)-reversible pairs: <= for Qf=f, >= for Qf=-f",
       false,
       {"lambdas", "sizes", "trials"},
       run_ordering_random},
      {"lifted-ordering",
       "minimal switching rate is variance-optimal; lifted chains beat their collapsed kernel (guided walk chain)",
       false,
       {"target", "lambdas", "thetas", "trials"},
       run_lifted_ordering},
      {"neal-identity", "pair-chain variance identity linking second-order chains to their pair kernels", false,
       {"lambdas", "sizes", "trials"}, run_neal_identity},
      {"neal-ordering", "non-backtracking second-order chain dominates the plain chain in variance", false,
       {"lambdas", "sizes", "trials"}, run_neal_ordering},
      {"two-cycle-extra-chance",
       "2-cycle variance identities and monotonicity of extra-chance kernels in the number of stages",
       false,
       {"target", "lambdas", "trials", "refresh_rate"},
       run_two_cycle_extra_chance},
      {"ghmc-phi-compare",
       "metropolized flows: Metropolis acceptance beats Barker, finite exact and GHMC Monte Carlo",
       false,
       {"target", "lambdas", "trials", "replicates", "steps", "samples", "refresh_rate", "omega", "step_size", "nleap"},
       run_ghmc_phi_compare},
      {"phi-eps-bounds", "Gaussian-smoothed Metropolis acceptance: symmetry, monotonicity, approximation bound", false,
       {"eps", "samples"}, run_phi_eps_bounds},
      {"zigzag-gaussian-moments", "Zig-Zag invariance on a Gaussian and thinning against exact event-time inversion",
       true, {"target", "horizon", "replicates", "samples"}, run_zigzag_moments},
      {"zigzag-1d-gamma", "Zig-Zag: canonical intensities beat canonical plus a constant extra flip rate", true,
       {"target", "lambdas", "horizon", "replicates", "gamma"}, run_zigzag_1d_gamma},
      {"zigzag-2d-refresh", "Zig-Zag: per-coordinate velocity refresh beats full refresh at equal total rate", true,
       {"target", "lambdas", "horizon", "replicates", "refresh_rate"}, run_zigzag_2d_refresh},
  };
  return c;
}

inline std::string list_experiments() {
  std::size_t w = 0;
  for (const auto& e : catalog()) w = std::max(w, e.name.size());
  std::string out;
  for (const auto& e : catalog()) out += e.name + std::string(w + 2 - e.name.size(), ' ') + e.description + "\n";
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c) { return find_experiment(c.experiment).run(c); }

// ---------------------------------------------------------------------------
// Output files

inline json summary_json(const ExperimentResult& r) {
  json checks = json::array();
  for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"max_violation", c.max_violation}});
  return {{"experiment", r.experiment}, {"pass", r.pass()}, {"checks", checks}};
}

// results.csv, summary.json and chains.csv depend only on config and seed; meta.json holds the timestamp.
inline void write_outputs(const ExperimentResult& r, const ExperimentConfig& c, const std::string& dir,
                          double seconds = NAN) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  io::write_file((d / "results.csv").string(), [&](std::ostream& os) { io::write_results(os, r.rows); });
  io::write_file((d / "summary.json").string(), [&](std::ostream& os) { os << summary_json(r).dump(2) << '\n'; });
  if (!r.chains.empty())
    io::write_file((d / "chains.csv").string(), [&](std::ostream& os) { io::write_chain_rows(os, r.chains); });
  std::time_t now = std::time(nullptr);
  char ts[32];
  std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  json meta{{"config", config_to_json(c)}, {"timestamp", ts}, {"threads", worker_count(1u << 20)}};
  if (!std::isnan(seconds)) meta["seconds"] = seconds;
  io::write_file((d / "meta.json").string(), [&](std::ostream& os) { os << meta.dump(2) << '\n'; });
}

enum ExitCode { exit_pass = 0, exit_check_failed = 1, exit_config = 2, exit_numeric = 3 };

// Loads, runs and writes one experiment; exceptions become exit codes.
inline int run_command(const std::string& path, std::optional<std::uint64_t> seed, std::optional<std::string> out,
                       std::ostream& log, std::ostream& err) {
  try {
    auto cfg = load_config(path);
    if (seed) cfg.seed = *seed;
    const std::string dir = out ? *out : cfg.output.value_or("results/" + cfg.experiment);
    auto t0 = std::chrono::steady_clock::now();
    auto res = run_experiment(cfg);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_outputs(res, cfg, dir, secs);
    char line[160];
    for (const auto& c : res.checks) {
      std::snprintf(line, sizeof line, "%-4s %-40s rows=%-4zu max_violation=%.3g\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.rows, c.max_violation);
      log << line;
    }
    std::snprintf(line, sizeof line, "%.1fs", secs);
    log << cfg.experiment << ": " << (res.pass() ? "PASS" : "FAIL") << " in " << line << ", results in " << dir
        << "\n";
    return res.pass() ? exit_pass : exit_check_failed;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return exit_numeric;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return exit_numeric;
  }
}

}  // namespace nonrev::exp
