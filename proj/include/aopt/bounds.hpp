#pragma once

#include "aopt/controller.hpp"
#include "aopt/core.hpp"
#include "aopt/plant.hpp"
#include "aopt/problem.hpp"
#include "aopt/sim.hpp"

#include <optional>
#include <random>
#include <vector>

namespace aopt {

/// Constants entering the gain bounds. kappa_Q is sup‖Q(u)‖ for the gradient
/// predicate and sup λ_max(Q(u)) for the momentum condition; kappa_V bounds
/// the Lyapunov gradient of the general case.
struct BoundInputs {
  BoundInputs() = default;
  BoundInputs(double gamma_, double zeta_, double L_, std::optional<double> mu_ = std::nullopt)
      : gamma(gamma_), zeta(zeta_), L(L_), mu(mu_) {}

  double gamma = 0.0;
  double zeta = 0.0;
  double L = 0.0;
  std::optional<double> mu;
  std::optional<double> kappa_Q;
  std::optional<double> lambda_D;
  std::optional<double> kappa_V;
  std::optional<double> ell;
};

namespace detail {

inline void check_core(const BoundInputs& in) {
  if (!(in.gamma > 0.0) || !(in.zeta > 0.0) || !(in.L >= 0.0)) {
    throw DomainError("bounds: need gamma > 0, zeta > 0 and L >= 0");
  }
}

inline double need(const std::optional<double>& v, const char* what) {
  if (!v) throw DomainError(std::string("bounds: missing ") + what);
  if (!(*v > 0.0)) throw DomainError(std::string("bounds: ") + what + " must be positive");
  return *v;
}

}  // namespace detail

/// ε* = γ/(ζL); +∞ when L = 0 (every gain is admissible).
inline double gradient_bound(const BoundInputs& in) {
  detail::check_core(in);
  return in.L == 0.0 ? kInf : in.gamma / (in.zeta * in.L);
}

/// sup‖Q‖ < γ/(ζL).
inline bool gradient_predicate(const BoundInputs& in) {
  return detail::need(in.kappa_Q, "kappa_Q") < gradient_bound(in);
}

/// γμ/(ζL).
inline double newton_bound(const BoundInputs& in) {
  const double mu = detail::need(in.mu, "mu");
  return mu * gradient_bound(in);
}

struct MomentumCheck {
  bool holds = false;
  double margin = 0.0;
};

/// (sup λ_max Q)² / inf λ_min D < γ/(ζL), strictly.
inline MomentumCheck momentum_bound_holds(const BoundInputs& in) {
  const double kq = detail::need(in.kappa_Q, "kappa_Q");
  const double ld = detail::need(in.lambda_D, "lambda_D");
  const double margin = gradient_bound(in) - kq * kq / ld;
  return {margin > 0.0, margin};
}

/// γ/(ζL(1 + κℓ/μ)).
inline double general_bound(const BoundInputs& in) {
  const double kv = detail::need(in.kappa_V, "kappa_V");
  const double ell = detail::need(in.ell, "ell");
  const double mu = detail::need(in.mu, "mu");
  return gradient_bound(in) / (1.0 + kv * ell / mu);
}

struct LtiBound {
  double primary = 0.0;         // 2τλ_min(P)/(L‖PH‖)
  double condition_form = 0.0;  // 2τ/(κ(P)L‖H‖)
};

inline LtiBound lti_bound(const Mat& P, double tau, const Mat& H, double L) {
  if (!is_symmetric(P, 1e-9) || !(min_eig(P) > 0.0)) throw DomainError("lti_bound: P must be symmetric positive definite");
  detail::require(P.cols() == H.rows(), "lti_bound: P and H disagree");
  const double lmin = min_eig(P), lmax = max_eig(P);
  if (L == 0.0) return {kInf, kInf};
  return {2.0 * tau * lmin / (L * op_norm(P * H)), 2.0 * tau / ((lmax / lmin) * L * op_norm(H))};
}

struct LambdaTest {
  Eigen::Matrix2d Lambda;
  bool negdef = false;
};

/// Λ = [[−(1−δ)α₁, ½((1−δ)β₁+δβ₂)], [·, −δ(α₂−ξ)]], tested by leading minors.
inline LambdaTest lambda_matrix(double alpha1, double alpha2, double xi, double beta1, double beta2, double delta) {
  LambdaTest t;
  const double off = 0.5 * ((1.0 - delta) * beta1 + delta * beta2);
  t.Lambda << -(1.0 - delta) * alpha1, off, off, -delta * (alpha2 - xi);
  const double m1 = t.Lambda(0, 0);
  const double det = t.Lambda(0, 0) * t.Lambda(1, 1) - off * off;
  t.negdef = m1 < 0.0 && det > 0.0;
  return t;
}

/// δ = β₁/(β₁+β₂).
inline double optimal_delta(double beta1, double beta2) {
  if (!(beta1 + beta2 > 0.0) || beta1 < 0.0 || beta2 < 0.0) throw DomainError("optimal_delta: need β₁, β₂ ≥ 0, not both 0");
  return beta1 / (beta1 + beta2);
}

/// α₁α₂/(α₁ξ + β₁β₂) > 1.
inline bool lambda_ratio_test(double alpha1, double alpha2, double xi, double beta1, double beta2) {
  return alpha1 * alpha2 > alpha1 * xi + beta1 * beta2;
}

// ---------------------------------------------------------------------------
// Mixed Lipschitz constant

enum class LMode { analytic_quadratic, sampled };

struct SampleOptions {
  int samples = 10000;
  double radius = 3.0;
  std::uint64_t seed = 0;
  double inflation = 1.1;
};

/// L with ‖H(u)ᵀ(∇Φ(x′,u) − ∇Φ(x,u))‖ ≤ L‖x′ − x‖.
inline double estimate_L(const Problem& prob, LMode mode, const SampleOptions& opt = {}) {
  if (l1_weight(prob.objective()) != 0.0) throw DomainError("estimate_L: the objective has a nonsmooth term");
  if (mode == LMode::analytic_quadratic) {
    const auto* q = std::get_if<QuadraticObjective>(&prob.objective());
    const LtiPlant* lti = as_lti(prob.plant());
    if (!q || !lti) throw DomainError("estimate_L: analytic mode needs an LTI plant and a quadratic objective");
    return op_norm(lti->H().transpose() * q->hessian_xx + q->hessian_xu.transpose());
  }
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> N(0.0, opt.radius);
  const Eigen::Index n = prob.state_dim(), p = prob.input_dim();
  auto draw = [&](Eigen::Index k) {
    Vec v(k);
    for (auto& a : v) a = N(rng);
    return v;
  };
  double best = 0.0;
  for (int s = 0; s < opt.samples; ++s) {
    const Vec u = draw(p), x = draw(n), x2 = draw(n);
    const double dx = (x2 - x).norm();
    if (dx == 0.0) continue;
    best = std::max(best, (prob.chain_gradient(x2, u) - prob.chain_gradient(x, u)).norm() / dx);
  }
  return opt.inflation * best;
}

/// Raw sampled ratio without inflation.
inline double sampled_L_ratio(const Problem& prob, const SampleOptions& opt) {
  SampleOptions o = opt;
  o.inflation = 1.0;
  return estimate_L(prob, LMode::sampled, o);
}

// ---------------------------------------------------------------------------
// LaSalle function along trajectories

struct LaSalleSeries {
  std::vector<double> times;
  std::vector<double> psi;
  std::vector<double> psi_dot;  // central differences at interior samples
  std::vector<double> slack;    // 10·Δt·max(1, |Ψ|)
  std::size_t satisfied = 0;

  double fraction_satisfied() const {
    return psi_dot.empty() ? 1.0 : static_cast<double>(satisfied) / static_cast<double>(psi_dot.size());
  }
};

/// δ from the two cross terms (β₁, β₂) = (L, ζ).
inline double lasalle_delta(const LyapunovCertificate& cert, double L) { return optimal_delta(L, cert.zeta); }

/// Ψ = (1−δ)V + δW along a closed-loop trajectory, with V = Φ̃(u) for
/// first-order laws, Φ̃(u) + ½‖z‖² for heavy ball and ‖(u,λ) − (u*,λ*)‖² for
/// the saddle-point law (`reference` gives (u*, λ*); by default it is solved).
inline LaSalleSeries lasalle_eval(const Problem& prob, const LyapunovCertificate& cert, double delta,
                                  const ControlLaw& law, const Trajectory& tr,
                                  const std::optional<Vec>& reference = std::nullopt) {
  if (!cert.lti) throw DomainError("lasalle_eval: certificate has no explicit Lyapunov function");
  if (tr.reduced) throw DomainError("lasalle_eval: needs a closed-loop trajectory");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("lasalle_eval: delta must lie in (0,1)");
  Vec ref;
  const bool saddle = std::holds_alternative<SaddlePointLaw>(law);
  if (saddle) {
    if (reference) {
      ref = *reference;
    } else {
      const Optimum opt = solve_optimum(prob);
      ref.resize(opt.u.size() + opt.multipliers.size());
      ref << opt.u, opt.multipliers;
    }
  } else if (std::holds_alternative<AcceleratedLaw>(law) || std::holds_alternative<SubgradientLaw>(law)) {
    throw DomainError("lasalle_eval: no LaSalle function for this family");
  }
  LaSalleSeries out;
  const std::size_t m = tr.size();
  out.times = tr.times;
  out.psi.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    double V;
    if (saddle) {
      Vec e(tr.u[k].size() + tr.aux[k].size());
      e << tr.u[k], tr.aux[k];
      V = (e - ref).squaredNorm();
    } else {
      V = prob.reduced_objective(tr.u[k]);
      if (std::holds_alternative<HeavyBallLaw>(law)) V += 0.5 * tr.aux[k].squaredNorm();
    }
    const double W = lyapunov_eval(cert, prob.plant(), tr.x[k], tr.u[k]).W;
    out.psi[k] = (1.0 - delta) * V + delta * W;
  }
  for (std::size_t k = 1; k + 1 < m; ++k) {
    const double span = tr.times[k + 1] - tr.times[k - 1];
    const double d = (out.psi[k + 1] - out.psi[k - 1]) / span;
    const double sl = 10.0 * 0.5 * span * std::max(1.0, std::abs(out.psi[k]));
    out.psi_dot.push_back(d);
    out.slack.push_back(sl);
    if (d <= sl) ++out.satisfied;
  }
  return out;
}

}  // namespace aopt
