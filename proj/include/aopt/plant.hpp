#pragma once

#include "aopt/core.hpp"
#include "aopt/ode.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

namespace aopt {

/// ẋ = Ax + Bu + w with A Hurwitz. The steady-state map is h(u) = Hu + Rw,
/// H = −A⁻¹B, R = −A⁻¹.
class LtiPlant {
 public:
  LtiPlant(Mat A, Mat B, Vec w) : A_(std::move(A)), B_(std::move(B)), w_(std::move(w)) {
    detail::require(A_.rows() == A_.cols(), "LtiPlant: A must be square");
    detail::require(B_.rows() == A_.rows(), "LtiPlant: B must have n rows");
    detail::require(w_.size() == A_.rows(), "LtiPlant: w must have n entries");
    if (!(spectral_abscissa(A_) < 0.0)) throw NotHurwitz("LtiPlant: A is not Hurwitz");
    Eigen::PartialPivLU<Mat> lu(A_);
    R_ = -lu.inverse();
    H_ = R_ * B_;
  }

  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }
  const Vec& w() const { return w_; }
  const Mat& H() const { return H_; }
  const Mat& R() const { return R_; }
  Eigen::Index state_dim() const { return A_.rows(); }
  Eigen::Index input_dim() const { return B_.cols(); }

  Vec dynamics(const Vec& x, const Vec& u) const { return A_ * x + B_ * u + w_; }
  Vec steady_state(const Vec& u) const {
    detail::require(u.size() == input_dim(), "steady_state: input dimension mismatch");
    return H_ * u + R_ * w_;
  }
  const Mat& steady_state_jacobian(const Vec& /*u*/) const { return H_; }

 private:
  Mat A_, B_;
  Vec w_;
  Mat H_, R_;
};

/// Exponential-stability constants of a plant: K, τ and the Lipschitz moduli
/// ℓx, ℓu of f and ℓ of h.
struct PlantConstants {
  double K = 1.0;
  double tau = 1.0;
  double lx = 1.0;
  double lu = 1.0;
  double l = 1.0;
};

/// User-supplied nonlinear plant. The caller is responsible for f(h(u), u) = 0;
/// `steady_state_residual` can be used to spot-check it.
class NonlinearPlant {
 public:
  using Dynamics = std::function<Vec(const Vec&, const Vec&)>;
  using SteadyState = std::function<Vec(const Vec&)>;
  using Jacobian = std::function<Mat(const Vec&)>;

  NonlinearPlant(Eigen::Index n, Eigen::Index p, Dynamics f, SteadyState h, Jacobian jacobian_h,
                 PlantConstants constants)
      : n_(n), p_(p), f_(std::move(f)), h_(std::move(h)), jh_(std::move(jacobian_h)), c_(constants) {
    detail::require(n_ >= 1 && p_ >= 1, "NonlinearPlant: dimensions must be positive");
    if (!(c_.K >= 1.0 && c_.tau > 0.0)) throw DomainError("NonlinearPlant: need K >= 1 and tau > 0");
  }

  Eigen::Index state_dim() const { return n_; }
  Eigen::Index input_dim() const { return p_; }
  const PlantConstants& constants() const { return c_; }

  Vec dynamics(const Vec& x, const Vec& u) const { return f_(x, u); }
  Vec steady_state(const Vec& u) const {
    detail::require(u.size() == p_, "steady_state: input dimension mismatch");
    return h_(u);
  }
  Mat steady_state_jacobian(const Vec& u) const {
    if (!jh_) throw DomainError("NonlinearPlant: no steady-state Jacobian supplied");
    return jh_(u);
  }
  bool has_jacobian() const { return static_cast<bool>(jh_); }

 private:
  Eigen::Index n_, p_;
  Dynamics f_;
  SteadyState h_;
  Jacobian jh_;
  PlantConstants c_;
};

using Plant = std::variant<LtiPlant, NonlinearPlant>;

inline Eigen::Index state_dim(const Plant& p) {
  return std::visit([](const auto& q) { return q.state_dim(); }, p);
}
inline Eigen::Index input_dim(const Plant& p) {
  return std::visit([](const auto& q) { return q.input_dim(); }, p);
}
inline Vec dynamics(const Plant& p, const Vec& x, const Vec& u) {
  return std::visit([&](const auto& q) { return q.dynamics(x, u); }, p);
}
inline Vec steady_state(const Plant& p, const Vec& u) {
  return std::visit([&](const auto& q) { return Vec(q.steady_state(u)); }, p);
}
inline Mat steady_state_jacobian(const Plant& p, const Vec& u) {
  return std::visit([&](const auto& q) { return Mat(q.steady_state_jacobian(u)); }, p);
}
inline const LtiPlant* as_lti(const Plant& p) { return std::get_if<LtiPlant>(&p); }

/// ‖f(h(u), u)‖.
inline double steady_state_residual(const Plant& p, const Vec& u) {
  return dynamics(p, steady_state(p, u), u).norm();
}

// ---------------------------------------------------------------------------
// Lyapunov certificates

struct LtiLyapunovData {
  Mat P;
  double tau = 0.0;
};

/// Constants (α, β, γ, ζ) with
///   α‖x−h(u)‖² ≤ W(x,u) ≤ β‖x−h(u)‖²,  Ẇ ≤ −γ‖x−h(u)‖²,  ‖∇ᵤW‖ ≤ ζ‖x−h(u)‖.
/// LTI certificates carry W = ½‖x−h(u)‖²_P explicitly.
struct LyapunovCertificate {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double zeta = 0.0;
  std::optional<LtiLyapunovData> lti;
};

struct LyapunovSolution {
  Mat P;
  double tau = 0.0;
};

/// τ = margin_fraction·(−spectral abscissa of A); P solves
/// (A+τI)ᵀP + P(A+τI) = −I, hence AᵀP + PA ⪯ −2τP.
inline LyapunovSolution solve_lti_lyapunov(const Mat& A, double margin_fraction = 0.9) {
  detail::require(A.rows() == A.cols(), "solve_lti_lyapunov: A must be square");
  if (!(margin_fraction > 0.0 && margin_fraction < 1.0)) {
    throw DomainError("solve_lti_lyapunov: margin_fraction must lie in (0, 1)");
  }
  const double abscissa = spectral_abscissa(A);
  if (!(abscissa < 0.0)) throw NotHurwitz("solve_lti_lyapunov: A is not Hurwitz");
  const double tau = -margin_fraction * abscissa;
  const Eigen::Index n = A.rows();
  const Mat shifted = A + tau * Mat::Identity(n, n);
  Mat P = solve_continuous_lyapunov(shifted, Mat::Identity(n, n));
  if (!(min_eig(P) > 0.0)) {
    throw DomainError("solve_lti_lyapunov: shifted solve lost definiteness; retry with a smaller margin");
  }
  return {std::move(P), tau};
}

/// λ_max(AᵀP + PA + 2τP).
inline double lmi_residual(const Mat& A, const Mat& P, double tau) {
  return max_eig(A.transpose() * P + P * A + 2.0 * tau * P);
}

/// Certificate for W = ½‖x−h(u)‖²_P. γ is the exact dissipation constant
/// ½λ_min(−(AᵀP+PA)), which is at least τλ_min(P) when the LMI holds.
inline LyapunovCertificate lti_certificate(const LtiPlant& plant, const Mat& P, double tau,
                                           double lmi_tol = 1e-9) {
  detail::require(P.rows() == plant.state_dim() && P.cols() == plant.state_dim(),
                  "lti_certificate: P must be n×n");
  if (!is_symmetric(P, 1e-9) || !(min_eig(P) > 0.0)) {
    throw DomainError("lti_certificate: P must be symmetric positive definite");
  }
  const Mat& A = plant.A();
  if (lmi_residual(A, P, tau) > lmi_tol * std::max(1.0, op_norm(P))) {
    throw DomainError("lti_certificate: AᵀP + PA ⪯ −2τP violated");
  }
  LyapunovCertificate c;
  c.alpha = 0.5 * min_eig(P);
  c.beta = 0.5 * max_eig(P);
  c.gamma = 0.5 * min_eig(-(A.transpose() * P + P * A));
  c.zeta = op_norm(P * plant.H());
  c.lti = LtiLyapunovData{P, tau};
  return c;
}

/// Constants of the integral converse-Lyapunov construction
/// V(z,u) = ∫₀ᵀ ‖φ(t,z,u)‖² dt with T = ln(2K²)/(2τ).
struct ConverseConstants {
  double T = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 0.0;  // ‖∇_z V‖ ≤ δ‖z‖
  double zeta_prime = 0.0;
  double zeta = 0.0;
};

namespace detail {

// (e^{sT} − 1)/s, continuous at s = 0.
inline double expm1_over(double s, double T) {
  if (s == 0.0) return T;
  return std::expm1(s * T) / s;
}

// ((sT − 1)e^{sT} + 1)/s² = T² Σ_{k≥2} (k−1)/k! (sT)^{k−2}.
inline double zeta_kernel(double s, double T) {
  const double y = s * T;
  if (std::abs(y) < 0.5) {
    double term = 0.5;  // (sT)^{k−2}/k! at k = 2
    double sum = 0.0;
    for (int k = 2; k < 60; ++k) {
      sum += (k - 1) * term;
      term *= y / (k + 1);
      if (std::abs(term) * k < 1e-18 * std::abs(sum)) break;
    }
    return T * T * sum;
  }
  return ((y - 1.0) * std::exp(y) + 1.0) / (s * s);
}

}  // namespace detail

/// Explicit constants from exponential-stability data (K, τ) and Lipschitz
/// moduli (ℓx, ℓu, ℓ). The ℓx = τ case is evaluated through its analytic
/// limit; near it a series replaces the cancelling closed form.
inline ConverseConstants converse_lyapunov_constants(double K, double tau, double lx, double lu, double l) {
  if (!(K >= 1.0) || !(tau > 0.0) || !(lx > 0.0) || !(lu > 0.0) || !(l > 0.0)) {
    throw DomainError("converse_lyapunov_constants: need K >= 1 and positive τ, ℓx, ℓu, ℓ");
  }
  ConverseConstants c;
  c.T = std::log(2.0 * K * K) / (2.0 * tau);
  const double T = c.T;
  c.alpha = -std::expm1(-2.0 * lx * T) / (2.0 * lx);
  c.beta = K * K * (-std::expm1(-2.0 * tau * T)) / (2.0 * tau);
  c.gamma = 0.5;
  const double s = lx - tau;
  // δ = 2K(1 − e^{sT})/(τ − ℓx) = 2K (e^{sT} − 1)/s
  c.delta = 2.0 * K * detail::expm1_over(s, T);
  const double l_prime = lx * l + lu;
  c.zeta_prime = 2.0 * K * l_prime * detail::zeta_kernel(s, T);
  c.zeta = c.delta * l + c.zeta_prime;
  return c;
}

inline LyapunovCertificate certificate_from(const ConverseConstants& c) {
  LyapunovCertificate out;
  out.alpha = c.alpha;
  out.beta = c.beta;
  out.gamma = c.gamma;
  out.zeta = c.zeta;
  return out;
}

/// W and its gradients for certificates that carry an explicit quadratic W.
struct LyapunovValue {
  double W = 0.0;
  Vec grad_x;
  Vec grad_u;
};

inline LyapunovValue lyapunov_eval(const LyapunovCertificate& cert, const Plant& plant, const Vec& x,
                                   const Vec& u) {
  if (!cert.lti) throw DomainError("lyapunov_eval: certificate has no explicit Lyapunov function");
  const Mat& P = cert.lti->P;
  detail::require(x.size() == P.rows(), "lyapunov_eval: state dimension mismatch");
  const Vec e = x - steady_state(plant, u);
  const Vec Pe = P * e;
  LyapunovValue v;
  v.W = 0.5 * e.dot(Pe);
  v.grad_x = Pe;
  v.grad_u = -steady_state_jacobian(plant, u).transpose() * Pe;
  return v;
}

// ---------------------------------------------------------------------------
// Decay-rate estimation from simulated open-loop responses

struct DecayProbe {
  double dt = 1e-3;
  double horizon = 20.0;
  double floor = 1e-12;  // relative error below which samples are discarded
};

struct DecayEstimate {
  double K = 1.0;
  double tau = 0.0;
};

/// Fits ‖x(t)−h(û)‖ ≤ K‖x₀−h(û)‖e^{−τt}. τ is the slowest tail slope of
/// log‖x(t)−h(û)‖ over all probes; K is then inflated until the envelope
/// covers every sample.
inline DecayEstimate estimate_decay(const Plant& plant, const std::vector<Vec>& probe_inputs,
                                    const std::vector<Vec>& x0_samples, const DecayProbe& cfg = {}) {
  if (probe_inputs.empty() || x0_samples.empty()) throw DomainError("estimate_decay: no samples");
  struct Series {
    std::vector<double> t, r;
  };
  std::vector<Series> runs;
  double tau = kInf;
  for (const Vec& u : probe_inputs) {
    const Vec xs = steady_state(plant, u);
    const VectorField field = [&](double, const Vec& x) { return dynamics(plant, x, u); };
    for (const Vec& x0 : x0_samples) {
      const double e0 = (x0 - xs).norm();
      if (e0 == 0.0) continue;
      Series s;
      Vec x = x0;
      const auto steps = static_cast<long>(std::ceil(cfg.horizon / cfg.dt));
      for (long k = 0; k <= steps; ++k) {
        const double r = (x - xs).norm() / e0;
        if (!std::isfinite(r)) throw DomainError("estimate_decay: trajectory is not finite");
        if (r < cfg.floor) break;
        s.t.push_back(k * cfg.dt);
        s.r.push_back(r);
        x = rk4_step(field, k * cfg.dt, x, cfg.dt);
      }
      if (s.t.size() < 4) continue;
      // least-squares slope over the second half of the recorded window
      const std::size_t first = s.t.size() / 2;
      double st = 0, sy = 0, stt = 0, sty = 0;
      const double m = static_cast<double>(s.t.size() - first);
      for (std::size_t i = first; i < s.t.size(); ++i) {
        const double y = std::log(s.r[i]);
        st += s.t[i];
        sy += y;
        stt += s.t[i] * s.t[i];
        sty += s.t[i] * y;
      }
      const double slope = (m * sty - st * sy) / (m * stt - st * st);
      if (!(slope < 0.0) || !(s.r.back() < s.r.front())) {
        throw DomainError("estimate_decay: sample does not decay (plant violates exponential stability)");
      }
      tau = std::min(tau, -slope);
      runs.push_back(std::move(s));
    }
  }
  if (runs.empty()) throw DomainError("estimate_decay: all samples start at steady state");
  DecayEstimate est;
  est.tau = tau;
  est.K = 1.0;
  for (const Series& s : runs) {
    for (std::size_t i = 0; i < s.t.size(); ++i) est.K = std::max(est.K, s.r[i] * std::exp(tau * s.t[i]));
  }
  return est;
}

}  // namespace aopt
