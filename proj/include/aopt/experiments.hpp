#pragma once

#include "aopt/bounds.hpp"
#include "aopt/controller.hpp"
#include "aopt/core.hpp"
#include "aopt/geometry.hpp"
#include "aopt/plant.hpp"
#include "aopt/problem.hpp"
#include "aopt/sim.hpp"

#include <cstdint>
#include <cstring>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace aopt {

// ---------------------------------------------------------------------------
// Fixed low-dimensional examples

/// ẋ = ax + bu + w with Φ = ½qx² + cxu + ½ru² + ρ|x|.
inline Problem scalar_lti_problem(double a, double b, double q, double c, double r, double rho = 0.0) {
  QuadraticObjective o;
  o.hessian_xx = Mat::Constant(1, 1, q);
  o.hessian_xu = Mat::Constant(1, 1, c);
  o.hessian_uu = Mat::Constant(1, 1, r);
  o.linear_x = Vec::Zero(1);
  o.linear_u = Vec::Zero(1);
  o.l1_weight_x = rho;
  const auto plant = std::make_shared<const Plant>(
      LtiPlant(Mat::Constant(1, 1, a), Mat::Constant(1, 1, b), Vec::Zero(1)));
  return Problem(plant, o);
}

/// ẋ = −x + u, Φ = ½x².
inline Problem scalar_example() { return scalar_lti_problem(-1, 1, 1, 0, 0); }

/// ẋ = −x + u, Φ = 2x² − xu + ¼u². The gradient closed loop has
/// characteristic polynomial s² + (1 − ε/2)s + 5ε/2, so it loses stability at ε = 2.
inline Problem cross_coupled_example() { return scalar_lti_problem(-1, 1, 4, -1, 0.5); }
inline constexpr double kCrossCoupledBoundary = 2.0;

/// ẋ = −x + u, Φ = |x|.
inline Problem l1_example() { return scalar_lti_problem(-1, 1, 0, 0, 0, 1.0); }

/// ẋ = −x + u, Φ = x².
inline Problem squared_example() { return scalar_lti_problem(-1, 1, 2, 0, 0); }

// ---------------------------------------------------------------------------
// Bounds

struct BoundsReport {
  Mat P;
  double tau = 0.0;
  double lmi_residual = 0.0;
  LyapunovCertificate cert;
  double L = 0.0;
  std::optional<double> L_sampled;
  double mu = 0.0;  // λ_min of the reduced Hessian
  double eps_star = 0.0;
  std::optional<double> eps_newton;
  LtiBound lti;
};

/// Certificate and gain bounds for an LTI plant with a quadratic objective.
inline BoundsReport bounds_report(const Problem& prob, double margin = 0.9, int L_samples = 0) {
  const LtiPlant* lti = as_lti(prob.plant());
  if (!lti) throw DomainError("bounds_report: needs an LTI plant");
  BoundsReport br;
  const LyapunovSolution sol = solve_lti_lyapunov(lti->A(), margin);
  br.P = sol.P;
  br.tau = sol.tau;
  br.lmi_residual = lmi_residual(lti->A(), sol.P, sol.tau);
  br.cert = lti_certificate(*lti, sol.P, sol.tau);
  br.L = estimate_L(prob, LMode::analytic_quadratic);
  if (L_samples > 0) {
    SampleOptions so;
    so.samples = L_samples;
    br.L_sampled = estimate_L(prob, LMode::sampled, so);
  }
  br.mu = min_eig(prob.reduced_hessian(Vec::Zero(prob.input_dim())));
  const BoundInputs in{br.cert.gamma, br.cert.zeta, br.L, br.mu};
  br.eps_star = gradient_bound(in);
  if (br.mu > 0.0) br.eps_newton = newton_bound(in);
  br.lti = lti_bound(sol.P, sol.tau, lti->H(), br.L);
  return br;
}

// ---------------------------------------------------------------------------
// Experiment configuration and results

struct SimOverrides {
  std::optional<double> dt;
  std::optional<double> horizon;
  std::optional<Method> method;
  std::optional<int> record_stride;
};

inline SimConfig apply(SimConfig cfg, const SimOverrides& o) {
  if (o.horizon) {
    // keep the step count when only the horizon changes
    if (!o.dt) cfg.dt *= *o.horizon / cfg.horizon;
    cfg.horizon = *o.horizon;
  }
  if (o.dt) cfg.dt = *o.dt;
  if (o.method) cfg.method = *o.method;
  if (o.record_stride) cfg.record_stride = *o.record_stride;
  cfg.validate();
  return cfg;
}

enum class Experiment {
  fig_gradient,
  fig_newton,
  fig_subgradient,
  fig_nesterov,
  fig_saddle,
  bounds_report,
  threshold_sweep,
  property_suite
};

inline const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::fig_gradient: return "fig_gradient";
    case Experiment::fig_newton: return "fig_newton";
    case Experiment::fig_subgradient: return "fig_subgradient";
    case Experiment::fig_nesterov: return "fig_nesterov";
    case Experiment::fig_saddle: return "fig_saddle";
    case Experiment::bounds_report: return "bounds_report";
    case Experiment::threshold_sweep: return "threshold_sweep";
    case Experiment::property_suite: return "property_suite";
  }
  return "?";
}

inline std::optional<Experiment> parse_experiment(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(Experiment::property_suite); ++k) {
    const auto e = static_cast<Experiment>(k);
    if (s == to_string(e)) return e;
  }
  return std::nullopt;
}

struct ExperimentConfig {
  Experiment experiment = Experiment::fig_gradient;
  /// Explicit instance data; otherwise a random instance (or `example`) is used.
  std::optional<RandomInstance> instance;
  /// "scalar" or "cross_coupled" for bounds_report and threshold runs.
  std::optional<std::string> example;
  Eigen::Index n = 20;
  Eigen::Index p = 5;
  Eigen::Index r = 5;  // output constraints for fig_saddle
  std::vector<std::uint64_t> seeds{0};
  std::vector<double> eps_multipliers{1.0, 10.0, 200.0, 290.0};
  double margin = 0.9;
  double sigma = 10.0;
  bool literal_signs = false;
  /// Largest ε/ε* tried by threshold searches.
  double threshold_ceiling = 1e5;
  SimOverrides sim;
  int property_samples = 1000;

  void validate() const {
    if (n < 1 || p < 1 || r < 0) throw DomainError("config: dimensions must be positive");
    if (seeds.empty()) throw DomainError("config: at least one seed is required");
    for (double m : eps_multipliers)
      if (!(m > 0.0)) throw DomainError("config: multipliers must be positive");
    if (!(margin > 0.0 && margin < 1.0)) throw DomainError("config: margin must lie in (0,1)");
    if (!(sigma >= 0.0)) throw DomainError("config: sigma must be nonnegative");
    if (!(threshold_ceiling > 1.0)) throw DomainError("config: threshold_ceiling must exceed 1");
    if (property_samples < 1) throw DomainError("config: property_samples must be positive");
    if (example && *example != "scalar" && *example != "cross_coupled") {
      throw DomainError("config: unknown example '" + *example + "'");
    }
  }
};

struct RunRecord {
  std::string label;
  double multiplier = 1.0;
  SimConfig config;
  InitialState init;
  Trajectory traj;
};

struct ThresholdRow {
  std::uint64_t seed = 0;
  double eps_star = 0.0;
  std::optional<ThresholdResult> threshold;  // nullopt: stable up to the ceiling
  bool violation = false;                    // ε* itself judged unstable
  std::string note;

  double ratio() const { return threshold ? threshold->eps_crit / eps_star : kInf; }
};

struct CheckResult {
  explicit CheckResult(std::string name_ = {}) : name(std::move(name_)) {}

  std::string name;
  bool passed = true;
  long count = 0;
  double worst = 0.0;
  std::string witness;  // first counterexample
};

struct ExperimentReport {
  Experiment experiment = Experiment::fig_gradient;
  std::uint64_t seed = 0;
  std::optional<BoundsReport> bounds;
  std::vector<RunRecord> runs;
  std::vector<ThresholdRow> thresholds;
  std::vector<CheckResult> checks;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> notes;

  bool all_checks_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  std::optional<double> metric(const std::string& key) const {
    for (const auto& [k, v] : metrics)
      if (k == key) return v;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Scenario helpers

inline RunRecord run_labeled(const Problem& prob, const ControlLaw& law, const InitialState& init, const SimConfig& cfg,
                             bool reduced, std::string label, double multiplier) {
  RunRecord rec;
  rec.label = std::move(label);
  rec.multiplier = multiplier;
  rec.config = cfg;
  rec.init = init;
  rec.traj = reduced ? simulate_reduced(prob, law, init, cfg) : simulate_closed_loop(prob, law, init, cfg);
  return rec;
}

/// x = 0, u = 1, auxiliary state 0.
inline InitialState default_start(const Problem& prob, const ControlLaw& law) {
  return {Vec::Zero(prob.state_dim()), Vec::Ones(prob.input_dim()), Vec::Zero(aux_dim(law, prob))};
}

/// One exact-stepping grid for both runs, long enough for the slower of the
/// two (capped), so reduced and closed-loop series share time stamps.
inline SimConfig paired_config(const Problem& prob, const ControlLaw& law, double max_horizon = 1e7) {
  const SimConfig a = affine_config(prob, law, true, 40.0, 20000, max_horizon);
  const SimConfig b = affine_config(prob, law, false, 40.0, 20000, max_horizon);
  return a.horizon >= b.horizon ? a : b;
}

inline std::function<SimConfig(double)> affine_config_for(const Problem& prob, const ControlLaw& law,
                                                           const SimOverrides& o) {
  return [&prob, law, o](double eps) { return apply(affine_config(prob, with_gain(law, eps), false), o); };
}

inline RandomInstance instance_for(const ExperimentConfig& cfg, std::uint64_t seed, Eigen::Index constraints = 0) {
  if (cfg.instance) return *cfg.instance;
  RandomInstanceOptions o;
  o.constraints = constraints;
  return random_instance(cfg.n, cfg.p, seed, o);
}

// ---------------------------------------------------------------------------
// Scenarios

/// Reduced and closed-loop gradient runs at each multiple of ε*.
inline ExperimentReport fig_gradient(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentReport rep;
  rep.experiment = Experiment::fig_gradient;
  rep.seed = seed;
  const Problem prob = make_problem(instance_for(cfg, seed));
  rep.bounds = bounds_report(prob, cfg.margin);
  const double eps_star = rep.bounds->eps_star;
  for (double m : cfg.eps_multipliers) {
    const ControlLaw law = GradientLaw{Metric::scaled(m * eps_star)};
    const SimConfig sc = apply(paired_config(prob, law), cfg.sim);
    const InitialState init = default_start(prob, law);
    std::ostringstream tag;
    tag << "eps_" << m;
    rep.runs.push_back(run_labeled(prob, law, init, sc, true, tag.str() + "_reduced", m));
    rep.runs.push_back(run_labeled(prob, law, init, sc, false, tag.str() + "_closed", m));
  }
  return rep;
}

/// Newton runs at ε = γμ/(ζL), plus the spread of the reduced linearization's
/// eigenvalues around −ε.
inline ExperimentReport fig_newton(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentReport rep;
  rep.experiment = Experiment::fig_newton;
  rep.seed = seed;
  const Problem prob = make_problem(instance_for(cfg, seed));
  rep.bounds = bounds_report(prob, cfg.margin);
  if (!rep.bounds->eps_newton) throw DomainError("fig_newton: the reduced objective is not strongly convex");
  const double eps = *rep.bounds->eps_newton;
  const ControlLaw law = NewtonLaw{eps};
  const AffineField lin = linearize_affine(prob, law, true);
  const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(lin.M).eigenvalues();
  double dev = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) dev = std::max(dev, std::abs(ev(i) + eps));
  rep.metrics.emplace_back("eps", eps);
  rep.metrics.emplace_back("max_eigen_deviation", dev);
  const SimConfig sc = apply(paired_config(prob, law), cfg.sim);
  const InitialState init = default_start(prob, law);
  rep.runs.push_back(run_labeled(prob, law, init, sc, true, "newton_reduced", 1.0));
  rep.runs.push_back(run_labeled(prob, law, init, sc, false, "newton_closed", 1.0));
  return rep;
}

/// Subgradient feedback on ẋ = −x + u with Φ = |x|.
inline ExperimentReport fig_subgradient(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.experiment = Experiment::fig_subgradient;
  const Problem prob = l1_example();
  const ControlLaw law = SubgradientLaw{1.0, 0.0};
  SimConfig red;
  red.dt = 5e-4;
  red.horizon = 10.0;
  red.record_stride = 10;
  SimConfig cl;
  cl.dt = 1e-3;
  cl.horizon = 50.0;
  cl.record_stride = 10;
  const InitialState init{Vec::Ones(1), Vec::Ones(1), Vec()};
  rep.runs.push_back(run_labeled(prob, law, init, apply(red, cfg.sim), true, "subgradient_reduced", 1.0));
  rep.runs.push_back(run_labeled(prob, law, init, apply(cl, cfg.sim), false, "subgradient_closed", 1.0));
  rep.metrics.emplace_back("closed_tail_amplitude", rep.runs.back().traj.tail_amplitude);
  return rep;
}

/// Accelerated flow with damping r/t on ẋ = −x + u, Φ = x².
inline ExperimentReport fig_nesterov(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.experiment = Experiment::fig_nesterov;
  const Problem prob = squared_example();
  const ControlLaw law = AcceleratedLaw{3.0, 1.0};
  SimConfig red;
  red.dt = 0.05;
  red.horizon = 5e4;
  red.record_stride = 20;
  SimConfig cl;
  cl.dt = 0.01;
  cl.horizon = 200.0;
  cl.record_stride = 10;
  const InitialState init{Vec::Ones(1), Vec::Ones(1), Vec::Zero(1)};
  rep.runs.push_back(run_labeled(prob, law, init, apply(red, cfg.sim), true, "nesterov_reduced", 1.0));
  rep.runs.push_back(run_labeled(prob, law, init, apply(cl, cfg.sim), false, "nesterov_closed", 1.0));
  return rep;
}

/// Saddle-point feedback on an output-constrained instance: the threshold is
/// bisected first, then both runs use half of the largest stable gain.
inline ExperimentReport fig_saddle(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentReport rep;
  rep.experiment = Experiment::fig_saddle;
  rep.seed = seed;
  const RandomInstance inst = instance_for(cfg, seed, cfg.r);
  const Problem prob = make_problem(inst);
  if (prob.constraint_count() == 0) throw DomainError("fig_saddle: instance has no output constraint");
  rep.bounds = bounds_report(prob, cfg.margin);
  const ControlLaw law = SaddlePointLaw{1.0, cfg.sigma, cfg.literal_signs};
  const InitialState init = default_start(prob, law);
  const double start = 1e-2 * rep.bounds->eps_star;
  std::optional<ThresholdResult> thr;
  try {
    thr = search_instability_threshold(prob, law, start, cfg.threshold_ceiling * rep.bounds->eps_star, init, SimConfig{},
                                       2.0, 0.01, affine_config_for(prob, law, cfg.sim));
  } catch (const DomainError& e) {
    rep.notes.emplace_back(e.what());
    rep.metrics.emplace_back("eps_crit", 0.0);
    return rep;
  }
  const double eps = thr ? 0.5 * thr->eps_lo : cfg.threshold_ceiling * rep.bounds->eps_star;
  if (thr) {
    rep.metrics.emplace_back("eps_crit", thr->eps_crit);
  } else {
    rep.notes.emplace_back("no instability up to the ceiling");
  }
  rep.metrics.emplace_back("eps", eps);
  const ControlLaw run_law = with_gain(law, eps);
  const SimConfig sc = apply(paired_config(prob, run_law), cfg.sim);
  rep.runs.push_back(run_labeled(prob, run_law, init, sc, true, "saddle_reduced", eps / rep.bounds->eps_star));
  rep.runs.push_back(run_labeled(prob, run_law, init, sc, false, "saddle_closed", eps / rep.bounds->eps_star));
  const Trajectory& tr = rep.runs.back().traj;
  rep.metrics.emplace_back("final_constraint_violation", prob.constraint_violation(tr.x.back()));
  rep.metrics.emplace_back("final_kkt", tr.final_residual);
  return rep;
}

/// Empirical gradient-law threshold against ε* for one instance.
inline ThresholdRow gradient_threshold(const Problem& prob, std::uint64_t seed, double margin, double ceiling,
                                       const SimOverrides& o = {}) {
  ThresholdRow row;
  row.seed = seed;
  row.eps_star = bounds_report(prob, margin).eps_star;
  const ControlLaw law = GradientLaw{Metric::scaled(row.eps_star)};
  try {
    row.threshold = search_instability_threshold(prob, law, row.eps_star, ceiling * row.eps_star, default_start(prob, law),
                                                 SimConfig{}, 2.0, 0.01, affine_config_for(prob, law, o));
  } catch (const DomainError& e) {
    row.violation = true;
    row.note = e.what();
  }
  return row;
}

inline ExperimentReport threshold_sweep(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.experiment = Experiment::threshold_sweep;
  rep.seed = cfg.seeds.front();
  if (cfg.example) {
    const Problem prob = *cfg.example == "scalar" ? scalar_example() : cross_coupled_example();
    rep.thresholds.push_back(gradient_threshold(prob, 0, cfg.margin, cfg.threshold_ceiling, cfg.sim));
    return rep;
  }
  double lo = kInf, hi = 0.0;
  for (std::uint64_t s : cfg.seeds) {
    const Problem prob = make_problem(instance_for(cfg, s));
    ThresholdRow row = gradient_threshold(prob, s, cfg.margin, cfg.threshold_ceiling, cfg.sim);
    if (row.threshold) {
      lo = std::min(lo, row.ratio());
      hi = std::max(hi, row.ratio());
    }
    rep.thresholds.push_back(std::move(row));
  }
  if (hi > 0.0) rep.metrics.emplace_back("ratio_span", hi / lo);
  return rep;
}

// ---------------------------------------------------------------------------
// Property suite

namespace detail {

struct SuiteRng {
  std::mt19937_64 eng;
  std::normal_distribution<double> N{0.0, 1.0};
  std::uniform_real_distribution<double> U{0.0, 1.0};
  explicit SuiteRng(std::uint64_t s) : eng(s) {}
  double n() { return N(eng); }
  double u(double a = 0.0, double b = 1.0) { return a + (b - a) * U(eng); }
  Vec vec(Eigen::Index k) {
    Vec v(k);
    for (auto& a : v) a = n();
    return v;
  }
  Mat mat(Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n();
    return m;
  }
};

inline void fail(CheckResult& c, const std::string& witness) {
  if (c.passed) c.witness = witness;
  c.passed = false;
}

/// Polyhedron in R^p with `tight` of `rows` general inequalities active at u0
/// and an optional equality through u0.
inline std::pair<PolyhedralSet, Vec> random_polyhedron(SuiteRng& rng, Eigen::Index p, Eigen::Index rows,
                                                       Eigen::Index tight, bool with_eq) {
  const Vec u0 = rng.vec(p);
  PolyhedronData d;
  d.ineq_matrix = rng.mat(rows, p);
  d.ineq_rhs = d.ineq_matrix * u0;
  for (Eigen::Index j = tight; j < rows; ++j) d.ineq_rhs(j) += rng.u(0.2, 1.2);
  if (with_eq) {
    d.eq_matrix = rng.mat(1, p);
    d.eq_rhs = d.eq_matrix * u0;
  }
  return {PolyhedralSet(p, d, u0), u0};
}

inline bool same_bits(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != b[k].size()) return false;
    if (std::memcmp(a[k].data(), b[k].data(), sizeof(double) * static_cast<std::size_t>(a[k].size())) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

inline CheckResult check_two_rate_ratio(std::uint64_t seed, int draws) {
  CheckResult c{"two_rate_ratio_test"};
  detail::SuiteRng rng(seed);
  for (int k = 0; k < draws; ++k) {
    const double a1 = rng.u(0.05, 5), a2 = rng.u(0.05, 5), xi = rng.u(0, 3), b1 = rng.u(0.05, 5), b2 = rng.u(0.05, 5);
    const bool ratio = lambda_ratio_test(a1, a2, xi, b1, b2);
    const bool nd = lambda_matrix(a1, a2, xi, b1, b2, optimal_delta(b1, b2)).negdef;
    ++c.count;
    if (ratio != nd) {
      std::ostringstream w;
      w << "alpha1=" << a1 << " alpha2=" << a2 << " xi=" << xi << " beta1=" << b1 << " beta2=" << b2;
      detail::fail(c, w.str());
    }
  }
  return c;
}

inline CheckResult check_projection_identities(std::uint64_t seed, int samples) {
  CheckResult c{"projection_identities"};
  detail::SuiteRng rng(seed);
  for (int k = 0; k < samples; ++k) {
    const Eigen::Index p = 2 + k % 5;
    const bool with_eq = k % 3 == 0;
    const Eigen::Index tight = k % (p - (with_eq ? 1 : 0) + 1);
    const auto [U, u0] = detail::random_polyhedron(rng, p, tight + 3, tight, with_eq);
    const Vec v = 2.0 * rng.vec(p);
    const NormalDecomposition dec = normal_decomposition(U, u0, v);
    const double e1 = std::abs(dec.eta.dot(v - dec.eta));
    const double e2 = std::abs(v.dot(v - dec.eta) - (v - dec.eta).squaredNorm());
    const double e = std::max(e1, e2);
    c.worst = std::max(c.worst, e);
    ++c.count;
    if (e > 1e-9) detail::fail(c, "sample " + std::to_string(k) + " identity error " + std::to_string(e));
  }
  return c;
}

/// Projected gradient runs on box, simplex and general polyhedral input sets.
inline std::pair<CheckResult, std::vector<std::pair<Problem, Trajectory>>> check_projected_feasibility(std::uint64_t seed) {
  CheckResult c{"projected_feasibility"};
  std::vector<std::pair<Problem, Trajectory>> runs;
  detail::SuiteRng rng(seed);
  for (int k = 0; k < 3; ++k) {
    const RandomInstance inst = random_instance(20, 5, seed + static_cast<std::uint64_t>(k));
    std::optional<PolyhedralSet> U;
    if (k == 0) U = PolyhedralSet::box(Vec::Constant(5, -0.3), Vec::Constant(5, 0.3));
    if (k == 1) U = PolyhedralSet::simplex(5, 1.0);
    if (k == 2) U = detail::random_polyhedron(rng, 5, 6, 2, true).first;
    Problem prob = make_problem(inst, U);
    const BoundsReport br = bounds_report(prob);
    const ControlLaw law = ProjectedGradientLaw{br.eps_star};
    SimConfig sc;
    sc.method = Method::euler_projected;
    sc.dt = suggest_dt(prob, law, br.L);
    sc.horizon = std::max(sc.dt, std::min(50.0 / (br.eps_star * std::max(br.mu, 1e-3)), 2e4 * sc.dt));
    const InitialState init{Vec::Zero(20), U->feasible_point(), Vec()};
    Trajectory tr = simulate_closed_loop(prob, law, init, sc);
    for (const Vec& u : tr.u) {
      const double viol = std::max(U->eq_violation(u), U->ineq_violation(u));
      c.worst = std::max(c.worst, viol);
      ++c.count;
      if (viol > 1e-8) detail::fail(c, "set " + std::to_string(k) + " violation " + std::to_string(viol));
    }
    runs.emplace_back(std::move(prob), std::move(tr));
  }
  return {c, runs};
}

/// Sandwich α‖x−h(u)‖² ≤ W ≤ β‖x−h(u)‖² and ‖∇ᵤW‖ ≤ ζ‖x−h(u)‖.
inline CheckResult check_certificate_sandwich(const Problem& prob, const LyapunovCertificate& cert, std::uint64_t seed,
                                              int samples, const std::string& tag) {
  CheckResult c{"certificate_sandwich_" + tag};
  detail::SuiteRng rng(seed);
  for (int k = 0; k < samples; ++k) {
    const Vec x = 3.0 * rng.vec(prob.state_dim()), u = 3.0 * rng.vec(prob.input_dim());
    const double d2 = (x - steady_state(prob.plant(), u)).squaredNorm();
    const LyapunovValue lv = lyapunov_eval(cert, prob.plant(), x, u);
    const double tol = 1e-10 * std::max(1.0, d2);
    const double e = std::max({cert.alpha * d2 - lv.W, lv.W - cert.beta * d2,
                               lv.grad_u.norm() - cert.zeta * std::sqrt(d2) - 1e-10 * std::max(1.0, std::sqrt(d2))});
    c.worst = std::max(c.worst, e);
    ++c.count;
    if (e > tol) detail::fail(c, "sample " + std::to_string(k) + " excess " + std::to_string(e));
  }
  return c;
}

/// LaSalle function along a converged bounded-gain run.
inline CheckResult check_lasalle(const Problem& prob, const BoundsReport& br, const ControlLaw& law,
                                 const Trajectory& tr, const std::string& tag) {
  CheckResult c{"lasalle_" + tag};
  const LaSalleSeries s = lasalle_eval(prob, br.cert, lasalle_delta(br.cert, br.L), law, tr);
  c.count = static_cast<long>(s.psi_dot.size());
  c.worst = 1.0 - s.fraction_satisfied();
  if (s.fraction_satisfied() < 0.99) {
    detail::fail(c, "satisfied fraction " + std::to_string(s.fraction_satisfied()));
  }
  return c;
}

/// general ≤ gradient/2 for κ = 1, ℓ ≥ μ; momentum predicate against direct
/// eigenvalue evaluation on random Q, D.
inline CheckResult check_bound_consistency(std::uint64_t seed, int samples) {
  CheckResult c{"bound_consistency"};
  detail::SuiteRng rng(seed);
  for (int k = 0; k < samples; ++k) {
    BoundInputs in{rng.u(0.01, 5), rng.u(0.01, 5), rng.u(0.01, 5)};
    in.mu = rng.u(0.01, 5);
    in.ell = *in.mu * rng.u(1.0, 10.0);
    in.kappa_V = 1.0;
    const double g = general_bound(in), e = gradient_bound(in);
    ++c.count;
    if (!(g <= 0.5 * e * (1 + 1e-15))) detail::fail(c, "general bound above half the gradient bound");

    const Eigen::Index p = 1 + k % 4;
    const Mat Mq = rng.mat(p, p), Md = rng.mat(p, p);
    const Mat Q = 0.1 * (Mq * Mq.transpose() + 0.01 * Mat::Identity(p, p));
    const Mat D = Md * Md.transpose() + 0.05 * Mat::Identity(p, p);
    in.kappa_Q = max_eig(Q);
    in.lambda_D = min_eig(D);
    const Eigen::SelfAdjointEigenSolver<Mat> eq(Q), ed(D);
    const double lq = eq.eigenvalues().maxCoeff(), ld = ed.eigenvalues().minCoeff();
    const bool direct = lq * lq / ld < in.gamma / (in.zeta * in.L);
    ++c.count;
    if (momentum_bound_holds(in).holds != direct) detail::fail(c, "momentum predicate disagrees at draw " + std::to_string(k));
  }
  return c;
}

/// At the KKT point of output-constrained instances the saddle field must
/// vanish, and away from it field and KKT residual must both be nonzero.
inline CheckResult check_saddle_equivalence(std::uint64_t seed, bool literal_signs) {
  CheckResult c{"saddle_kkt_equivalence"};
  detail::SuiteRng rng(seed);
  for (int k = 0; k < 5; ++k) {
    RandomInstanceOptions o;
    o.constraints = 5;
    const Problem prob = make_problem(random_instance(20, 10, seed + static_cast<std::uint64_t>(k), o));
    const Optimum opt = solve_optimum(prob);
    const LawRate at = saddle_point_law(prob, 1.0, 10.0, opt.x, opt.u, opt.multipliers, literal_signs);
    const double f = std::sqrt(at.du.squaredNorm() + at.daux.squaredNorm());
    c.worst = std::max(c.worst, f);
    ++c.count;
    if (f > 1e-8) {
      std::ostringstream w;
      w << "instance " << k << ": field norm " << f << " at the KKT point (u*, lambda*)";
      detail::fail(c, w.str());
    }
    for (int s = 0; s < 20; ++s) {
      const Vec u = opt.u + 0.1 * rng.vec(10);
      const Vec lam = opt.multipliers + 0.1 * rng.vec(5);
      const Vec x = steady_state(prob.plant(), u);
      const LawRate r = saddle_point_law(prob, 1.0, 10.0, x, u, lam, literal_signs);
      const double fn = std::sqrt(r.du.squaredNorm() + r.daux.squaredNorm());
      const double kkt = prob.kkt_residual(x, u, literal_signs ? Vec(-lam) : lam);
      ++c.count;
      if ((fn <= 1e-10) != (kkt <= 1e-10)) detail::fail(c, "field and KKT residual disagree off the optimum");
    }
  }
  return c;
}

/// ‖gradient field‖/ε equals the KKT residual at x = h(u).
inline CheckResult check_gradient_equivalence(std::uint64_t seed, int samples) {
  CheckResult c{"gradient_kkt_equivalence"};
  detail::SuiteRng rng(seed);
  const Problem prob = make_problem(random_instance(20, 5, seed));
  for (int k = 0; k < samples; ++k) {
    const Vec u = rng.vec(5);
    const Vec x = steady_state(prob.plant(), u);
    const double f = gradient_law(prob, Metric::scaled(0.5), x, u).norm() / 0.5;
    const double e = std::abs(f - prob.kkt_residual(x, u)) / std::max(1.0, f);
    c.worst = std::max(c.worst, e);
    ++c.count;
    if (e > 1e-10) detail::fail(c, "sample " + std::to_string(k));
  }
  return c;
}

inline CheckResult check_determinism(std::uint64_t seed) {
  CheckResult c{"determinism"};
  const Problem a = make_problem(random_instance(20, 5, seed));
  const Problem b = make_problem(random_instance(20, 5, seed));
  const double eps = bounds_report(a).eps_star;
  const ControlLaw law = GradientLaw{Metric::scaled(eps)};
  SimConfig sc;
  sc.dt = 0.05;
  sc.horizon = 20.0;
  const Trajectory t1 = simulate_closed_loop(a, law, default_start(a, law), sc);
  const Trajectory t2 = simulate_closed_loop(b, law, default_start(b, law), sc);
  c.count = static_cast<long>(t1.size());
  if (!detail::same_bits(t1.x, t2.x) || !detail::same_bits(t1.u, t2.u)) detail::fail(c, "trajectories differ");
  return c;
}

inline ExperimentReport property_suite(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.experiment = Experiment::property_suite;
  const std::uint64_t seed = cfg.seeds.front();
  rep.seed = seed;
  const int n = cfg.property_samples;
  rep.checks.push_back(check_two_rate_ratio(seed, n));
  rep.checks.push_back(check_projection_identities(seed + 1, n));
  auto [feas, projected_runs] = check_projected_feasibility(seed + 2);
  rep.checks.push_back(feas);
  rep.checks.push_back(check_bound_consistency(seed + 3, n));
  rep.checks.push_back(check_saddle_equivalence(seed + 4, cfg.literal_signs));
  rep.checks.push_back(check_gradient_equivalence(seed + 5, n));
  rep.checks.push_back(check_determinism(seed + 6));

  // certificate checks on the scalar example and two random instances at ε ≤ ε*
  std::vector<std::pair<std::string, Problem>> probs;
  probs.emplace_back("scalar", scalar_example());
  probs.emplace_back("random_a", make_problem(random_instance(20, 5, seed + 7)));
  probs.emplace_back("random_b", make_problem(random_instance(20, 5, seed + 8)));
  for (const auto& [tag, prob] : probs) {
    const BoundsReport br = bounds_report(prob, cfg.margin);
    rep.checks.push_back(check_certificate_sandwich(prob, br.cert, seed + 9, n, tag));
    for (double m : {0.5, 1.0}) {
      const ControlLaw law = GradientLaw{Metric::scaled(m * br.eps_star)};
      const SimConfig sc = affine_config(prob, law, false);
      const InitialState init = default_start(prob, law);
      const Trajectory tr = simulate_closed_loop(prob, law, init, sc);
      if (tr.outcome != Outcome::converged) {
        CheckResult c{"bounded_gain_convergence_" + tag};
        detail::fail(c, "run at " + std::to_string(m) + " eps* did not converge");
        rep.checks.push_back(c);
        continue;
      }
      rep.checks.push_back(check_lasalle(prob, br, law, tr, tag + "_" + std::to_string(m)));
    }
  }
  for (auto& [prob, tr] : projected_runs) {
    if (tr.outcome != Outcome::converged) continue;
    const BoundsReport br = bounds_report(prob, cfg.margin);
    rep.checks.push_back(check_lasalle(prob, br, ProjectedGradientLaw{br.eps_star}, tr, "projected"));
  }
  return rep;
}

/// Dispatches one experiment; figure scenarios produce one report per seed.
inline std::vector<ExperimentReport> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<ExperimentReport> out;
  switch (cfg.experiment) {
    case Experiment::fig_gradient:
      for (auto s : cfg.seeds) out.push_back(fig_gradient(cfg, s));
      break;
    case Experiment::fig_newton:
      for (auto s : cfg.seeds) out.push_back(fig_newton(cfg, s));
      break;
    case Experiment::fig_subgradient: out.push_back(fig_subgradient(cfg)); break;
    case Experiment::fig_nesterov: out.push_back(fig_nesterov(cfg)); break;
    case Experiment::fig_saddle:
      for (auto s : cfg.seeds) out.push_back(fig_saddle(cfg, s));
      break;
    case Experiment::bounds_report: {
      for (auto s : cfg.seeds) {
        ExperimentReport rep;
        rep.experiment = Experiment::bounds_report;
        rep.seed = s;
        if (cfg.example) {
          rep.bounds = bounds_report(*cfg.example == "scalar" ? scalar_example() : cross_coupled_example(), cfg.margin, 10000);
        } else {
          rep.bounds = bounds_report(make_problem(instance_for(cfg, s)), cfg.margin, 10000);
        }
        out.push_back(std::move(rep));
      }
      break;
    }
    case Experiment::threshold_sweep: out.push_back(threshold_sweep(cfg)); break;
    case Experiment::property_suite: out.push_back(property_suite(cfg)); break;
  }
  return out;
}

}  // namespace aopt
