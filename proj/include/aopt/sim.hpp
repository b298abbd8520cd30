#pragma once

#include "aopt/controller.hpp"
#include "aopt/core.hpp"
#include "aopt/ode.hpp"
#include "aopt/problem.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace aopt {

enum class Method { rk4, euler_projected, exact_affine };
enum class Outcome { converged, oscillating, diverged, horizon_exhausted };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::rk4: return "rk4";
    case Method::euler_projected: return "euler_projected";
    case Method::exact_affine: return "exact_affine";
  }
  return "?";
}

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::converged: return "converged";
    case Outcome::oscillating: return "oscillating";
    case Outcome::diverged: return "diverged";
    case Outcome::horizon_exhausted: return "horizon_exhausted";
  }
  return "?";
}

struct SimConfig {
  double dt = 1e-2;
  double horizon = 50.0;
  Method method = Method::rk4;
  double divergence_threshold = 1e6;
  double convergence_tol = 1e-6;
  int record_stride = 1;
  bool stop_on_convergence = true;
  /// Fraction of the recorded samples in each tail window of the classifier.
  double tail_fraction = 0.1;

  void validate() const {
    if (!(dt > 0.0) || !(horizon >= dt) || !(divergence_threshold > 0.0) || !(convergence_tol > 0.0) ||
        record_stride < 1 || !(tail_fraction > 0.0 && tail_fraction <= 0.5)) {
      throw DomainError("SimConfig: invalid parameters");
    }
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> x;
  std::vector<Vec> u;
  std::vector<Vec> aux;
  std::vector<double> residual;
  Outcome outcome = Outcome::horizon_exhausted;
  bool reduced = false;
  bool nonfinite = false;  // a field evaluation produced NaN or Inf
  double final_residual = kInf;
  double max_norm = 0.0;
  double eps = 0.0;
  /// Half peak-to-peak of the input over the last tail window (largest coordinate).
  double tail_amplitude = 0.0;
  std::string family;

  std::size_t size() const { return times.size(); }
};

struct InitialState {
  Vec x0;  // ignored by reduced runs
  Vec u0;
  Vec aux0;  // empty → zeros
};

/// Criticality measure per sample: KKT residual, plus ‖z‖ for momentum laws;
/// saddle runs use the dual state as multipliers.
inline double sample_residual(const Problem& prob, const ControlLaw& law, const Vec& x, const Vec& u, const Vec& aux) {
  if (const auto* s = std::get_if<SaddlePointLaw>(&law)) {
    return prob.kkt_residual(x, u, s->literal_signs ? Vec(-aux) : aux);
  }
  double r = prob.kkt_residual(x, u);
  if (std::holds_alternative<HeavyBallLaw>(law) || std::holds_alternative<AcceleratedLaw>(law)) {
    r = std::max(r, aux.norm());
  }
  return r;
}

/// Step size 0.1/max(ρ(A), ε·max(L, ‖∇²Φ̃‖)), shrunk 10× for projected laws.
/// Nonlinear plants use ℓx in place of ρ(A).
inline double suggest_dt(const Problem& prob, const ControlLaw& law, double L) {
  double plant_rate;
  if (const LtiPlant* lti = as_lti(prob.plant())) {
    plant_rate = spectral_radius(lti->A());
  } else {
    plant_rate = std::get<NonlinearPlant>(prob.plant()).constants().lx;
  }
  double curvature = L;
  try {
    curvature = std::max(curvature, op_norm(prob.reduced_hessian(Vec::Zero(prob.input_dim()))));
  } catch (const DomainError&) {
  }
  double dt = 0.1 / std::max({plant_rate, law_gain(law) * curvature, 1e-12});
  if (std::holds_alternative<ProjectedGradientLaw>(law)) dt /= 10.0;
  return dt;
}

namespace detail {

struct Layout {
  Eigen::Index n = 0, p = 0, a = 0;
  bool reduced = false;
  Eigen::Index size() const { return (reduced ? 0 : n) + p + a; }
};

inline void unpack(const Problem& prob, const Layout& L, const Vec& s, Vec& x, Vec& u, Vec& aux) {
  Eigen::Index off = 0;
  if (!L.reduced) {
    x = s.head(L.n);
    off = L.n;
  }
  u = s.segment(off, L.p);
  aux = s.tail(L.a);
  if (L.reduced) x = steady_state(prob.plant(), u);
}

inline Vec pack(const Layout& L, const Vec& x, const Vec& u, const Vec& aux) {
  Vec s(L.size());
  Eigen::Index off = 0;
  if (!L.reduced) {
    s.head(L.n) = x;
    off = L.n;
  }
  s.segment(off, L.p) = u;
  s.tail(L.a) = aux;
  return s;
}

inline double law_start_time(const ControlLaw& law) {
  const auto* acc = std::get_if<AcceleratedLaw>(&law);
  return acc ? acc->t0 : 0.0;
}

// The returned field refers to prob and law; both must outlive it.
inline VectorField make_field(const Problem& prob, const ControlLaw& law, Layout L) {
  return [&prob, &law, L](double t, const Vec& s) -> Vec {
    Vec x, u, aux;
    unpack(prob, L, s, x, u, aux);
    const LawRate rate = controller_field(prob, law, t, x, u, aux);
    Vec ds(L.size());
    Eigen::Index off = 0;
    if (!L.reduced) {
      ds.head(L.n) = dynamics(prob.plant(), x, u);
      off = L.n;
    }
    ds.segment(off, L.p) = rate.du;
    if (L.a > 0) ds.tail(L.a) = rate.daux;
    return ds;
  };
}

inline Trajectory integrate(const Problem& prob, const ControlLaw& law, const InitialState& init, const SimConfig& cfg,
                            bool reduced) {
  cfg.validate();
  Layout L{prob.state_dim(), prob.input_dim(), aux_dim(law, prob), reduced};
  detail::require(init.u0.size() == L.p, "simulate: u0 has wrong size");
  if (!reduced) detail::require(init.x0.size() == L.n, "simulate: x0 has wrong size");
  const Vec aux0 = init.aux0.size() == 0 ? Vec::Zero(L.a) : init.aux0;
  detail::require(aux0.size() == L.a, "simulate: aux0 has wrong size");

  const bool projected = std::holds_alternative<ProjectedGradientLaw>(law);
  if (projected) {
    if (!prob.input_set()) throw DomainError("simulate: projected law needs an input set");
    if (!prob.input_set()->contains(init.u0, 1e-8)) throw InfeasiblePoint("simulate: u0 is outside the input set");
  }
  if (projected && cfg.method != Method::euler_projected) {
    throw DomainError("simulate: projected laws require the euler_projected method");
  }

  const VectorField field = make_field(prob, law, L);

  Trajectory tr;
  tr.reduced = reduced;
  tr.family = family_name(law);
  tr.eps = law_gain(law);

  const double t0 = law_start_time(law);
  Vec s = pack(L, reduced ? Vec() : init.x0, init.u0, aux0);

  std::optional<AffineFlow> flow;
  if (cfg.method == Method::exact_affine) {
    if (std::holds_alternative<AcceleratedLaw>(law)) throw DomainError("simulate: exact_affine needs an autonomous field");
    Vec probe = s;
    for (Eigen::Index i = 0; i < probe.size(); ++i) probe(i) += 0.5 + 0.25 * static_cast<double>(i % 3);
    flow = affine_flow(extract_affine(field, t0, L.size(), probe), cfg.dt);
  }

  auto record = [&](double t, const Vec& st) {
    Vec x, u, aux;
    unpack(prob, L, st, x, u, aux);
    tr.times.push_back(t);
    tr.residual.push_back(sample_residual(prob, law, x, u, aux));
    tr.x.push_back(std::move(x));
    tr.u.push_back(std::move(u));
    tr.aux.push_back(std::move(aux));
  };

  const auto steps = static_cast<long>(std::llround(cfg.horizon / cfg.dt));
  bool stopped = false;
  tr.max_norm = s.norm();
  record(t0, s);
  if (cfg.stop_on_convergence && tr.residual.back() <= cfg.convergence_tol) stopped = true;

  for (long k = 0; k < steps && !stopped; ++k) {
    const double t = t0 + static_cast<double>(k) * cfg.dt;
    Vec next;
    switch (cfg.method) {
      case Method::rk4: next = rk4_step(field, t, s, cfg.dt); break;
      case Method::exact_affine: next = flow->step(s); break;
      case Method::euler_projected: {
        next = s + cfg.dt * field(t, s);
        if (projected) {
          const Eigen::Index off = reduced ? 0 : L.n;
          next.segment(off, L.p) = project_point(*prob.input_set(), Vec(next.segment(off, L.p)));
        }
        break;
      }
    }
    if (!next.allFinite()) {
      tr.nonfinite = true;
      tr.max_norm = kInf;
      stopped = true;
      break;
    }
    s = std::move(next);
    const double nrm = s.norm();
    tr.max_norm = std::max(tr.max_norm, nrm);
    const double tn = t0 + static_cast<double>(k + 1) * cfg.dt;
    if (nrm >= cfg.divergence_threshold) {
      record(tn, s);
      stopped = true;
      break;
    }
    if ((k + 1) % cfg.record_stride == 0 || k + 1 == steps) {
      record(tn, s);
      if (cfg.stop_on_convergence && tr.residual.back() <= cfg.convergence_tol) stopped = true;
    }
  }
  tr.final_residual = tr.residual.back();
  return tr;
}

}  // namespace detail

/// (M, c) of an affine closed-loop (or reduced) field ṡ = Ms + c, with the
/// state ordered (x, u, aux) or (u, aux). Throws DomainError for fields that
/// are not affine.
inline AffineField linearize_affine(const Problem& prob, const ControlLaw& law, bool reduced) {
  if (std::holds_alternative<AcceleratedLaw>(law)) throw DomainError("linearize_affine: field is time-varying");
  const detail::Layout L{prob.state_dim(), prob.input_dim(), aux_dim(law, prob), reduced};
  const VectorField field = detail::make_field(prob, law, L);
  Vec probe(L.size());
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe(i) = 0.5 + 0.25 * static_cast<double>(i % 3);
  return extract_affine(field, 0.0, L.size(), probe);
}

/// Exact-stepping settings sized to the slowest mode: horizon
/// decay_multiple/|spectral abscissa|, capped at max_horizon, split into `steps`.
inline SimConfig affine_config(const Problem& prob, const ControlLaw& law, bool reduced, double decay_multiple = 40.0,
                               long steps = 20000, double max_horizon = 1e9) {
  const AffineField f = linearize_affine(prob, law, reduced);
  const double a = std::abs(spectral_abscissa(f.M));
  SimConfig cfg;
  cfg.method = Method::exact_affine;
  cfg.horizon = std::min(max_horizon, decay_multiple / std::max(a, 1e-300));
  cfg.dt = cfg.horizon / static_cast<double>(steps);
  cfg.record_stride = static_cast<int>(std::max<long>(1, steps / 2000));
  return cfg;
}

struct TailStats {
  double earlier_mean = 0.0;
  double last_mean = 0.0;
  double earlier_max = 0.0;
  double last_max = 0.0;
  double amplitude = 0.0;
  int sign_changes = 0;
};

/// Residual statistics over the last two tail windows and the oscillation
/// amplitude/alternation count of the most active input coordinate.
inline TailStats tail_stats(const Trajectory& tr, double fraction = 0.1) {
  TailStats st;
  const std::size_t m = tr.size();
  const auto w = static_cast<std::size_t>(std::max<double>(2.0, std::floor(fraction * static_cast<double>(m))));
  if (m < 2 * w) return st;
  const std::size_t a = m - 2 * w, b = m - w;
  for (std::size_t i = a; i < b; ++i) {
    st.earlier_mean += tr.residual[i];
    st.earlier_max = std::max(st.earlier_max, tr.residual[i]);
  }
  for (std::size_t i = b; i < m; ++i) {
    st.last_mean += tr.residual[i];
    st.last_max = std::max(st.last_max, tr.residual[i]);
  }
  st.earlier_mean /= static_cast<double>(w);
  st.last_mean /= static_cast<double>(w);

  const Eigen::Index p = tr.u.front().size();
  Eigen::Index best = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    double lo = kInf, hi = -kInf;
    for (std::size_t i = b; i < m; ++i) {
      lo = std::min(lo, tr.u[i](j));
      hi = std::max(hi, tr.u[i](j));
    }
    if (0.5 * (hi - lo) > st.amplitude) {
      st.amplitude = 0.5 * (hi - lo);
      best = j;
    }
  }
  double mean = 0.0;
  for (std::size_t i = b; i < m; ++i) mean += tr.u[i](best);
  mean /= static_cast<double>(w);
  int prev = 0;
  for (std::size_t i = b; i < m; ++i) {
    const double d = tr.u[i](best) - mean;
    const int sg = d > 0 ? 1 : (d < 0 ? -1 : 0);
    if (sg != 0 && prev != 0 && sg != prev) ++st.sign_changes;
    if (sg != 0) prev = sg;
  }
  return st;
}

/// diverged → converged → oscillating (bounded, non-decaying tail residual with
/// sign alternation) → horizon_exhausted.
inline Outcome classify_outcome(const Trajectory& tr, const SimConfig& cfg) {
  if (tr.size() == 0) throw DomainError("classify_outcome: empty trajectory");
  if (tr.nonfinite || tr.max_norm >= cfg.divergence_threshold) return Outcome::diverged;
  if (tr.final_residual <= cfg.convergence_tol) return Outcome::converged;
  const TailStats st = tail_stats(tr, cfg.tail_fraction);
  const bool non_decaying = st.last_mean >= 0.5 * st.earlier_mean && st.last_mean > cfg.convergence_tol;
  if (non_decaying && st.sign_changes >= 2 && st.amplitude > cfg.convergence_tol) return Outcome::oscillating;
  return Outcome::horizon_exhausted;
}

inline Outcome classify_outcome(const Trajectory& tr, const Problem& /*prob*/, const SimConfig& cfg) {
  return classify_outcome(tr, cfg);
}

namespace detail {
inline void finish(Trajectory& tr, const SimConfig& cfg) {
  tr.outcome = classify_outcome(tr, cfg);
  tr.tail_amplitude = tail_stats(tr, cfg.tail_fraction).amplitude;
}
}  // namespace detail

/// Interconnection ẋ = f(x,u) with the controller in feedback.
inline Trajectory simulate_closed_loop(const Problem& prob, const ControlLaw& law, const InitialState& init,
                                       const SimConfig& cfg) {
  Trajectory tr = detail::integrate(prob, law, init, cfg, false);
  detail::finish(tr, cfg);
  return tr;
}

/// Reduced dynamics with x slaved to h(u); the x series holds h(u(t)).
inline Trajectory simulate_reduced(const Problem& prob, const ControlLaw& law, const InitialState& init,
                                   const SimConfig& cfg) {
  Trajectory tr = detail::integrate(prob, law, init, cfg, true);
  detail::finish(tr, cfg);
  return tr;
}

/// Stable unless the run diverged or its tail residual envelope grew.
inline bool judged_stable(const Trajectory& tr, const SimConfig& cfg) {
  if (tr.outcome == Outcome::converged) return true;
  if (tr.outcome == Outcome::diverged) return false;
  const TailStats st = tail_stats(tr, cfg.tail_fraction);
  return st.last_max < st.earlier_max;
}

struct ThresholdResult {
  double eps_crit = kInf;
  double eps_lo = 0.0;  // largest gain judged stable
  double eps_hi = kInf;  // smallest gain judged unstable
  int runs = 0;
};

/// Bisects the closed-loop stability boundary between a stable eps_lo and an
/// unstable eps_hi down to relative width `rel_width`. `config_for` may adapt
/// the simulation settings to the gain; the default uses `cfg` unchanged.
inline ThresholdResult find_instability_threshold(
    const Problem& prob, const ControlLaw& law, double eps_lo, double eps_hi, const InitialState& init,
    const SimConfig& cfg, double rel_width = 0.01,
    const std::function<SimConfig(double)>& config_for = nullptr) {
  if (!(eps_lo > 0.0) || !(eps_hi > eps_lo)) throw DomainError("find_instability_threshold: need 0 < eps_lo < eps_hi");
  ThresholdResult res;
  auto stable_at = [&](double eps) {
    const SimConfig c = config_for ? config_for(eps) : cfg;
    ++res.runs;
    return judged_stable(simulate_closed_loop(prob, with_gain(law, eps), init, c), c);
  };
  const bool lo_ok = stable_at(eps_lo);
  const bool hi_ok = stable_at(eps_hi);
  if (!lo_ok || hi_ok) throw DomainError("find_instability_threshold: bracket does not straddle the boundary");
  double lo = eps_lo, hi = eps_hi;
  while ((hi - lo) > rel_width * lo) {
    const double mid = std::sqrt(lo * hi);
    (stable_at(mid) ? lo : hi) = mid;
  }
  res.eps_lo = lo;
  res.eps_hi = hi;
  res.eps_crit = 0.5 * (lo + hi);
  return res;
}

/// Walks up from eps_start by `factor` until a run is unstable, then bisects.
/// Returns nullopt if every gain up to `ceiling` is stable.
inline std::optional<ThresholdResult> search_instability_threshold(
    const Problem& prob, const ControlLaw& law, double eps_start, double ceiling, const InitialState& init,
    const SimConfig& cfg, double factor = 2.0, double rel_width = 0.01,
    const std::function<SimConfig(double)>& config_for = nullptr) {
  if (!(eps_start > 0.0) || !(factor > 1.0)) throw DomainError("search_instability_threshold: invalid start or factor");
  auto stable_at = [&](double eps) {
    const SimConfig c = config_for ? config_for(eps) : cfg;
    return judged_stable(simulate_closed_loop(prob, with_gain(law, eps), init, c), c);
  };
  double lo = eps_start;
  if (!stable_at(lo)) throw DomainError("search_instability_threshold: start gain is already unstable");
  int walked = 1;
  for (double hi = lo * factor; hi <= ceiling * (1 + 1e-12); hi *= factor) {
    ++walked;
    if (!stable_at(hi)) {
      ThresholdResult r = find_instability_threshold(prob, law, lo, hi, init, cfg, rel_width, config_for);
      r.runs += walked;
      return r;
    }
    lo = hi;
  }
  return std::nullopt;
}

}  // namespace aopt
