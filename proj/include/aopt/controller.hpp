#pragma once

#include "aopt/core.hpp"
#include "aopt/geometry.hpp"
#include "aopt/problem.hpp"

#include <string>
#include <utility>
#include <variant>

namespace aopt {

/// Metric Q(u) of a variable-metric flow.
struct Metric {
  enum class Kind { scaled_identity, constant, newton };
  Kind kind = Kind::scaled_identity;
  double eps = 1.0;  // gain for scaled_identity and newton
  Mat Q;             // constant metric

  static Metric scaled(double eps) {
    if (!(eps > 0.0)) throw DomainError("Metric: gain must be positive");
    return Metric{Kind::scaled_identity, eps, Mat()};
  }
  static Metric constant(const Mat& Q) {
    if (!is_symmetric(Q) || !(min_eig(Q) > 0.0)) throw DomainError("Metric: Q must be symmetric positive definite");
    return Metric{Kind::constant, 1.0, Q};
  }
  static Metric newton(double eps) {
    if (!(eps > 0.0)) throw DomainError("Metric: gain must be positive");
    return Metric{Kind::newton, eps, Mat()};
  }
};

/// ε(∇²Φ̃(u))⁻¹.
inline Mat newton_metric(const Problem& prob, double eps, const Vec& u) {
  const Mat Hr = prob.reduced_hessian(u);
  Eigen::LLT<Mat> llt(Hr);
  if (llt.info() != Eigen::Success) throw DomainError("newton_metric: reduced Hessian is not positive definite");
  return eps * llt.solve(Mat::Identity(Hr.rows(), Hr.cols()));
}

/// Q(u) as a dense matrix.
inline Mat metric_matrix(const Metric& m, const Problem& prob, const Vec& u) {
  switch (m.kind) {
    case Metric::Kind::scaled_identity: return m.eps * Mat::Identity(prob.input_dim(), prob.input_dim());
    case Metric::Kind::constant:
      detail::require(m.Q.rows() == prob.input_dim(), "Metric: Q has wrong size");
      return m.Q;
    case Metric::Kind::newton: return newton_metric(prob, m.eps, u);
  }
  throw Error("metric_matrix: unknown metric kind");
}

/// Q(u)v; the Newton metric is applied through a Cholesky solve.
inline Vec metric_apply(const Metric& m, const Problem& prob, const Vec& u, const Vec& v) {
  switch (m.kind) {
    case Metric::Kind::scaled_identity: return m.eps * v;
    case Metric::Kind::constant:
      detail::require(m.Q.rows() == v.size(), "Metric: Q has wrong size");
      return m.Q * v;
    case Metric::Kind::newton: {
      Eigen::LLT<Mat> llt(prob.reduced_hessian(u));
      if (llt.info() != Eigen::Success) throw DomainError("newton_metric: reduced Hessian is not positive definite");
      return m.eps * llt.solve(v);
    }
  }
  throw Error("metric_apply: unknown metric kind");
}

/// sup‖Q(u)‖ for metrics where it does not depend on u (Newton: evaluated at u).
inline double metric_norm(const Metric& m, const Problem& prob, const Vec& u) {
  return op_norm(metric_matrix(m, prob, u));
}

// ---------------------------------------------------------------------------
// Control laws

struct GradientLaw {
  Metric metric;
};
struct NewtonLaw {
  double eps = 1.0;
};
struct ProjectedGradientLaw {
  double eps = 1.0;
};
struct HeavyBallLaw {
  Metric metric;
  Mat damping;  // constant D ≻ 0
};
struct SaddlePointLaw {
  double eps = 1.0;
  double sigma = 10.0;
  /// Use the literal "−Aᵀλ − σAᵀ(Ax−b)" signs inside u̇.
  bool literal_signs = false;
};
struct SubgradientLaw {
  double eps = 1.0;
  double tie_value = 0.0;  // selection of sign(·) at 0
};
struct AcceleratedLaw {
  double r = 3.0;
  double t0 = 1.0;
};

using ControlLaw =
    std::variant<GradientLaw, NewtonLaw, ProjectedGradientLaw, HeavyBallLaw, SaddlePointLaw, SubgradientLaw, AcceleratedLaw>;

inline std::string family_name(const ControlLaw& law) {
  static const char* names[] = {"gradient",     "newton",      "projected_gradient", "heavy_ball",
                                "saddle_point", "subgradient", "accelerated"};
  return names[law.index()];
}

/// Dimension of the auxiliary state: momentum (p), duals (r) or none.
inline Eigen::Index aux_dim(const ControlLaw& law, const Problem& prob) {
  if (std::holds_alternative<HeavyBallLaw>(law) || std::holds_alternative<AcceleratedLaw>(law)) return prob.input_dim();
  if (std::holds_alternative<SaddlePointLaw>(law)) return prob.constraint_count();
  return 0;
}

/// −Q(u)H(u)ᵀ∇Φ(x,u).
inline Vec gradient_law(const Problem& prob, const Metric& metric, const Vec& x, const Vec& u) {
  return -metric_apply(metric, prob, u, prob.chain_gradient(x, u));
}

/// [−εH(u)ᵀ∇Φ(x,u)] projected onto the tangent cone of U at u.
inline Vec projected_gradient_law(const Problem& prob, double eps, const PolyhedralSet& U, const Vec& x, const Vec& u) {
  return project_tangent(U, u, -eps * prob.chain_gradient(x, u));
}

inline Vec projected_gradient_law(const Problem& prob, double eps, const Vec& x, const Vec& u) {
  if (!prob.input_set()) throw DomainError("projected_gradient_law: problem has no input set");
  return projected_gradient_law(prob, eps, *prob.input_set(), x, u);
}

struct LawRate {
  Vec du;
  Vec daux;
};

/// u̇ = Q(u)z, ż = −Dz − Q(u)H(u)ᵀ∇Φ(x,u).
inline LawRate heavy_ball_law(const Problem& prob, const Metric& metric, const Mat& D, const Vec& x, const Vec& u,
                              const Vec& z) {
  detail::require(z.size() == prob.input_dim() && D.rows() == z.size() && D.cols() == z.size(),
                  "heavy_ball_law: momentum or damping has wrong size");
  if (!(min_eig(D) > 0.0)) throw DomainError("heavy_ball_law: damping must be positive definite");
  return {metric_apply(metric, prob, u, z), -D * z - metric_apply(metric, prob, u, prob.chain_gradient(x, u))};
}

/// u̇ = −εH(u)ᵀ(∇Φ(x,u) + [Aᵀλ + σAᵀ(Ax−b); 0]), λ̇ = ε(Ax − b).
inline LawRate saddle_point_law(const Problem& prob, double eps, double sigma, const Vec& x, const Vec& u,
                                const Vec& lambda, bool literal_signs = false) {
  if (!prob.output_constraint()) throw DomainError("saddle_point_law: problem has no output constraint");
  if (!(sigma >= 0.0)) throw DomainError("saddle_point_law: sigma must be nonnegative");
  const auto& c = *prob.output_constraint();
  detail::require(lambda.size() == c.A.rows(), "saddle_point_law: dual dimension mismatch");
  const Vec viol = c.A * x - c.b;
  const double sgn = literal_signs ? -1.0 : 1.0;
  const Vec pull = sgn * c.A.transpose() * (lambda + sigma * viol);
  const Vec g = prob.chain_gradient(x, u) + steady_state_jacobian(prob.plant(), u).transpose() * pull;
  return {-eps * g, eps * viol};
}

/// −εH(u)ᵀ(∇Φ(x,u) + [ρ·sign(x); 0]) with sign(0) := tie_value.
inline Vec subgradient_law(const Problem& prob, const Vec& x, const Vec& u, double tie_value = 0.0, double eps = 1.0) {
  const double rho = l1_weight(prob.objective());
  Vec s(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) s(i) = x(i) > 0.0 ? 1.0 : (x(i) < 0.0 ? -1.0 : tie_value);
  const Vec g = prob.chain_gradient(x, u) + rho * steady_state_jacobian(prob.plant(), u).transpose() * s;
  return -eps * g;
}

/// u̇ = z, ż = −(r/t)z − H(u)ᵀ∇Φ(x,u).
inline LawRate accelerated_law(const Problem& prob, double r, double t, const Vec& x, const Vec& u, const Vec& z) {
  if (!(t > 0.0)) throw DomainError("accelerated_law: time must be positive");
  detail::require(z.size() == prob.input_dim(), "accelerated_law: momentum dimension mismatch");
  return {z, -(r / t) * z - prob.chain_gradient(x, u)};
}

/// Evaluates any law at (t, x, u, aux).
inline LawRate controller_field(const Problem& prob, const ControlLaw& law, double t, const Vec& x, const Vec& u,
                                const Vec& aux) {
  return std::visit(
      [&](const auto& l) -> LawRate {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GradientLaw>) {
          return {gradient_law(prob, l.metric, x, u), Vec()};
        } else if constexpr (std::is_same_v<L, NewtonLaw>) {
          return {gradient_law(prob, Metric::newton(l.eps), x, u), Vec()};
        } else if constexpr (std::is_same_v<L, ProjectedGradientLaw>) {
          return {projected_gradient_law(prob, l.eps, x, u), Vec()};
        } else if constexpr (std::is_same_v<L, HeavyBallLaw>) {
          return heavy_ball_law(prob, l.metric, l.damping, x, u, aux);
        } else if constexpr (std::is_same_v<L, SaddlePointLaw>) {
          return saddle_point_law(prob, l.eps, l.sigma, x, u, aux, l.literal_signs);
        } else if constexpr (std::is_same_v<L, SubgradientLaw>) {
          return {subgradient_law(prob, x, u, l.tie_value, l.eps), Vec()};
        } else {
          return accelerated_law(prob, l.r, t, x, u, aux);
        }
      },
      law);
}

/// Gain ε of the law (for the constant metric, ‖Q‖).
inline double law_gain(const ControlLaw& law) {
  return std::visit(
      [](const auto& l) -> double {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GradientLaw> || std::is_same_v<L, HeavyBallLaw>) {
          return l.metric.kind == Metric::Kind::constant ? op_norm(l.metric.Q) : l.metric.eps;
        } else if constexpr (std::is_same_v<L, AcceleratedLaw>) {
          return 1.0;
        } else {
          return l.eps;
        }
      },
      law);
}

/// Copy of `law` with its gain replaced by eps. A constant metric is rescaled
/// to ‖Q‖ = eps.
inline ControlLaw with_gain(ControlLaw law, double eps) {
  if (!(eps > 0.0)) throw DomainError("with_gain: gain must be positive");
  std::visit(
      [eps](auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, GradientLaw> || std::is_same_v<L, HeavyBallLaw>) {
          if (l.metric.kind == Metric::Kind::constant) {
            l.metric.Q *= eps / op_norm(l.metric.Q);
          } else {
            l.metric.eps = eps;
          }
        } else if constexpr (std::is_same_v<L, AcceleratedLaw>) {
          throw DomainError("with_gain: the accelerated law has no gain");
        } else {
          l.eps = eps;
        }
      },
      law);
  return law;
}

// ---------------------------------------------------------------------------
// Output feedback through an affine output map y = Cx + d

/// Φ(x,u) := Φ_io(Cx + d, u). Quadratic costs stay quadratic.
inline Objective pulled_back_cost(const Objective& cost_io, const Mat& C, const Vec& d) {
  detail::require(C.rows() == d.size(), "pulled_back_cost: C and d disagree");
  if (const auto* q = std::get_if<QuadraticObjective>(&cost_io)) {
    detail::require(q->hessian_xx.rows() == C.rows(), "pulled_back_cost: cost and output dimensions disagree");
    if (q->l1_weight_x != 0.0) throw DomainError("pulled_back_cost: an l1 term on y cannot be pulled back");
    QuadraticObjective out;
    out.hessian_xx = symmetrize(C.transpose() * q->hessian_xx * C);
    out.hessian_xu = C.transpose() * q->hessian_xu;
    out.hessian_uu = q->hessian_uu;
    out.linear_x = C.transpose() * (q->hessian_xx * d + q->linear_x);
    out.linear_u = q->hessian_xu.transpose() * d + q->linear_u;
    out.offset = 0.5 * d.dot(q->hessian_xx * d) + q->linear_x.dot(d) + q->offset;
    return out;
  }
  const auto& c = std::get<CallableObjective>(cost_io);
  detail::require(c.n == C.rows(), "pulled_back_cost: cost and output dimensions disagree");
  CallableObjective out;
  out.n = C.cols();
  out.p = c.p;
  out.value = [c, C, d](const Vec& x, const Vec& u) { return c.value(C * x + d, u); };
  out.gradient = [c, C, d](const Vec& x, const Vec& u) {
    const Vec gy = c.gradient(C * x + d, u);
    Vec g(C.cols() + u.size());
    g.head(C.cols()) = C.transpose() * gy.head(C.rows());
    g.tail(u.size()) = gy.tail(u.size());
    return g;
  };
  if (c.hessian) {
    out.hessian = [c, C, d](const Vec& x, const Vec& u) {
      const Eigen::Index q = C.rows(), n = C.cols(), p = u.size();
      Mat T = Mat::Zero(q + p, n + p);
      T.topLeftCorner(q, n) = C;
      T.bottomRightCorner(p, p).setIdentity();
      return Mat(T.transpose() * c.hessian(C * x + d, u) * T);
    };
  }
  return out;
}

/// −Q(u)H_io(u)ᵀ∇Φ_io(y,u) with H_io = [C∇h(u); I]. `prob` supplies the plant
/// and, for the Newton metric, the pulled-back reduced Hessian.
inline Vec output_feedback_law(const Problem& prob, const Metric& metric, const Mat& C, const Vec& d,
                               const Objective& cost_io, const Vec& y, const Vec& u) {
  detail::require(C.cols() == prob.state_dim() && C.rows() == d.size() && y.size() == C.rows(),
                  "output_feedback_law: output map dimension mismatch");
  const Vec g_io = objective_gradient(cost_io, y, u);
  detail::require(g_io.size() == y.size() + u.size(), "output_feedback_law: cost dimension mismatch");
  const Mat Jio = C * steady_state_jacobian(prob.plant(), u);
  const Vec g = Jio.transpose() * g_io.head(y.size()) + g_io.tail(u.size());
  return -metric_apply(metric, prob, u, g);
}

}  // namespace aopt
