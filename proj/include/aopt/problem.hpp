#pragma once

#include "aopt/core.hpp"
#include "aopt/geometry.hpp"
#include "aopt/plant.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace aopt {

/// Φ(x,u) = ½xᵀPₓₓx + xᵀPₓᵤu + ½uᵀPᵤᵤu + qₓᵀx + qᵤᵀu + c + ρ‖x‖₁.
struct QuadraticObjective {
  Mat hessian_xx;
  Mat hessian_xu;
  Mat hessian_uu;
  Vec linear_x;
  Vec linear_u;
  double offset = 0.0;
  double l1_weight_x = 0.0;

  Eigen::Index state_dim() const { return hessian_xx.rows(); }
  Eigen::Index input_dim() const { return hessian_uu.rows(); }

  void validate() const {
    const Eigen::Index n = hessian_xx.rows();
    const Eigen::Index p = hessian_uu.rows();
    detail::require(hessian_xx.cols() == n && hessian_uu.cols() == p, "QuadraticObjective: diagonal blocks must be square");
    detail::require(hessian_xu.rows() == n && hessian_xu.cols() == p, "QuadraticObjective: hessian_xu must be n×p");
    detail::require(linear_x.size() == n && linear_u.size() == p, "QuadraticObjective: linear terms have wrong size");
    if (!is_symmetric(hessian_xx) || !is_symmetric(hessian_uu)) {
      throw DomainError("QuadraticObjective: Hessian blocks must be symmetric");
    }
    if (!(l1_weight_x >= 0.0)) throw DomainError("QuadraticObjective: l1 weight must be nonnegative");
  }

  Mat full_hessian() const {
    const Eigen::Index n = state_dim(), p = input_dim();
    Mat Hs(n + p, n + p);
    Hs << hessian_xx, hessian_xu, hessian_xu.transpose(), hessian_uu;
    return Hs;
  }
};

/// Objective given by callables. `gradient` returns the stacked (∇ₓΦ, ∇ᵤΦ);
/// `hessian`, when present, the full (n+p)×(n+p) Hessian.
struct CallableObjective {
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  std::function<double(const Vec&, const Vec&)> value;
  std::function<Vec(const Vec&, const Vec&)> gradient;
  std::function<Mat(const Vec&, const Vec&)> hessian;

  Eigen::Index state_dim() const { return n; }
  Eigen::Index input_dim() const { return p; }
  void validate() const {
    detail::require(n >= 1 && p >= 1, "CallableObjective: dimensions must be positive");
    if (!value || !gradient) throw DomainError("CallableObjective: value and gradient are required");
  }
};

using Objective = std::variant<QuadraticObjective, CallableObjective>;

inline double objective_value(const Objective& obj, const Vec& x, const Vec& u) {
  if (const auto* q = std::get_if<QuadraticObjective>(&obj)) {
    return 0.5 * x.dot(q->hessian_xx * x) + x.dot(q->hessian_xu * u) + 0.5 * u.dot(q->hessian_uu * u) +
           q->linear_x.dot(x) + q->linear_u.dot(u) + q->offset + q->l1_weight_x * x.lpNorm<1>();
  }
  return std::get<CallableObjective>(obj).value(x, u);
}

/// Gradient of the smooth part, stacked as (∇ₓΦ, ∇ᵤΦ). The ℓ1 term is excluded.
inline Vec objective_gradient(const Objective& obj, const Vec& x, const Vec& u) {
  if (const auto* q = std::get_if<QuadraticObjective>(&obj)) {
    Vec g(x.size() + u.size());
    g.head(x.size()) = q->hessian_xx * x + q->hessian_xu * u + q->linear_x;
    g.tail(u.size()) = q->hessian_xu.transpose() * x + q->hessian_uu * u + q->linear_u;
    return g;
  }
  return std::get<CallableObjective>(obj).gradient(x, u);
}

inline Mat objective_hessian(const Objective& obj, const Vec& x, const Vec& u) {
  if (const auto* q = std::get_if<QuadraticObjective>(&obj)) return q->full_hessian();
  const auto& c = std::get<CallableObjective>(obj);
  if (!c.hessian) throw DomainError("objective_hessian: callable objective has no Hessian");
  return c.hessian(x, u);
}

inline double l1_weight(const Objective& obj) {
  const auto* q = std::get_if<QuadraticObjective>(&obj);
  return q ? q->l1_weight_x : 0.0;
}

/// Linear output constraint Ax = b.
struct OutputConstraint {
  Mat A;
  Vec b;
};

struct KktOptions {
  double active_tol = 1e-8;
  /// |xᵢ| at or below this is treated as sitting on the ℓ1 kink.
  double kink_band = 1e-3;
};

/// minimize Φ(x,u) subject to x = h(u), u ∈ U, Ax = b.
class Problem {
 public:
  Problem(std::shared_ptr<const Plant> plant, Objective objective,
          std::optional<PolyhedralSet> input_set = std::nullopt,
          std::optional<OutputConstraint> output_constraint = std::nullopt)
      : plant_(std::move(plant)), objective_(std::move(objective)), set_(std::move(input_set)),
        constraint_(std::move(output_constraint)) {
    if (!plant_) throw DomainError("Problem: plant handle is empty");
    std::visit([](const auto& o) { o.validate(); }, objective_);
    const Eigen::Index n = state_dim(), p = input_dim();
    const bool dims_ok = std::visit([&](const auto& o) { return o.state_dim() == n && o.input_dim() == p; }, objective_);
    detail::require(dims_ok, "Problem: objective dimensions do not match the plant");
    if (set_) detail::require(set_->dim() == p, "Problem: input set dimension mismatch");
    if (constraint_) {
      detail::require(constraint_->A.cols() == n && constraint_->A.rows() == constraint_->b.size(),
                      "Problem: output constraint has inconsistent shape");
    }
    const auto* q = std::get_if<QuadraticObjective>(&objective_);
    if (as_lti(*plant_) && q && q->l1_weight_x == 0.0) {
      if (!(min_eig(reduced_hessian(Vec::Zero(p))) > 0.0)) {
        throw DomainError("Problem: reduced Hessian is not positive definite");
      }
    }
  }

  const Plant& plant() const { return *plant_; }
  std::shared_ptr<const Plant> plant_handle() const { return plant_; }
  const Objective& objective() const { return objective_; }
  const std::optional<PolyhedralSet>& input_set() const { return set_; }
  const std::optional<OutputConstraint>& output_constraint() const { return constraint_; }
  Eigen::Index state_dim() const { return aopt::state_dim(*plant_); }
  Eigen::Index input_dim() const { return aopt::input_dim(*plant_); }
  Eigen::Index constraint_count() const { return constraint_ ? constraint_->A.rows() : 0; }

  /// H(u) = [∇h(u); I], so that H(u)ᵀ∇Φ is the chain-rule gradient.
  Mat chain_matrix(const Vec& u) const {
    const Eigen::Index n = state_dim(), p = input_dim();
    Mat Hf(n + p, p);
    Hf.topRows(n) = steady_state_jacobian(*plant_, u);
    Hf.bottomRows(p).setIdentity();
    return Hf;
  }

  /// H(u)ᵀ∇Φ(x,u) for the smooth part of Φ.
  Vec chain_gradient(const Vec& x, const Vec& u) const {
    check_xu(x, u);
    return chain_matrix(u).transpose() * objective_gradient(objective_, x, u);
  }

 private:
  void check_xu(const Vec& x, const Vec& u) const {
    detail::require(x.size() == state_dim(), "Problem: state dimension mismatch");
    detail::require(u.size() == input_dim(), "Problem: input dimension mismatch");
  }

 public:
  double reduced_objective(const Vec& u) const {
    detail::require(u.size() == input_dim(), "reduced_objective: input dimension mismatch");
    return objective_value(objective_, steady_state(*plant_, u), u);
  }

  /// ∇Φ̃(u) = H(u)ᵀ∇Φ(h(u),u) (smooth part).
  Vec reduced_gradient(const Vec& u) const {
    detail::require(u.size() == input_dim(), "reduced_gradient: input dimension mismatch");
    return chain_gradient(steady_state(*plant_, u), u);
  }

  /// ∇²Φ̃(u). Exact when h is affine and Φ has a Hessian; otherwise central
  /// differences of the reduced gradient.
  Mat reduced_hessian(const Vec& u) const {
    detail::require(u.size() == input_dim(), "reduced_hessian: input dimension mismatch");
    const bool has_hessian = std::holds_alternative<QuadraticObjective>(objective_) ||
                             static_cast<bool>(std::get<CallableObjective>(objective_).hessian);
    if (as_lti(*plant_) && has_hessian) {
      const Mat Hf = chain_matrix(u);
      return symmetrize(Hf.transpose() * objective_hessian(objective_, steady_state(*plant_, u), u) * Hf);
    }
    const Eigen::Index p = input_dim();
    Mat Hr(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(u(i)));
      Vec up = u, um = u;
      up(i) += h;
      um(i) -= h;
      Hr.col(i) = (reduced_gradient(up) - reduced_gradient(um)) / (2.0 * h);
    }
    return symmetrize(Hr);
  }

  /// ‖Ax − b‖ (0 without an output constraint).
  double constraint_violation(const Vec& x) const {
    return constraint_ ? (constraint_->A * x - constraint_->b).norm() : 0.0;
  }

  /// max(‖x − h(u)‖, ‖[−H(u)ᵀ(∇Φ + ∇h(u)ᵀAᵀλ)]_U‖, ‖Ax − b‖). Multipliers λ
  /// default to the least-squares fit. With an ℓ1 term the minimum-norm
  /// element of the subdifferential is used.
  double kkt_residual(const Vec& x, const Vec& u, const std::optional<Vec>& multipliers = std::nullopt,
                      const KktOptions& opt = {}) const {
    check_xu(x, u);
    const Mat J = steady_state_jacobian(*plant_, u);
    Vec g = chain_gradient(x, u);

    if (constraint_) {
      const Mat M = J.transpose() * constraint_->A.transpose();
      Vec lam;
      if (multipliers) {
        detail::require(multipliers->size() == constraint_->A.rows(), "kkt_residual: multiplier count mismatch");
        lam = *multipliers;
      } else {
        lam = M.completeOrthogonalDecomposition().solve(-g);
      }
      g += M * lam;
    } else if (multipliers && multipliers->size() != 0) {
      throw DimensionError("kkt_residual: multipliers given without an output constraint");
    }

    const double rho = l1_weight(objective_);
    if (rho > 0.0) g = min_norm_l1_element(g, J, x, rho, opt.kink_band);

    double grad_term;
    if (set_) {
      grad_term = project_tangent(*set_, u, -g, opt.active_tol).norm();
    } else {
      grad_term = g.norm();
    }
    double r = std::max((x - steady_state(*plant_, u)).norm(), grad_term);
    if (constraint_) r = std::max(r, constraint_violation(x));
    return r;
  }

 private:
  // min ‖g + ρJᵀs‖ over sᵢ = sign(xᵢ) off the kink band and sᵢ ∈ [−1,1] on it
  // (exact cyclic coordinate descent on the box-constrained least squares).
  static Vec min_norm_l1_element(const Vec& g, const Mat& J, const Vec& x, double rho, double band) {
    Vec base = g;
    std::vector<Eigen::Index> kink;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (std::abs(x(i)) > band) {
        base += rho * (x(i) > 0 ? 1.0 : -1.0) * J.row(i).transpose();
      } else {
        kink.push_back(i);
      }
    }
    if (kink.empty()) return base;
    Vec s = Vec::Zero(static_cast<Eigen::Index>(kink.size()));
    Vec r = base;
    for (int sweep = 0; sweep < 500; ++sweep) {
      double change = 0.0;
      for (std::size_t k = 0; k < kink.size(); ++k) {
        const Vec col = rho * J.row(kink[k]).transpose();
        const double cc = col.squaredNorm();
        if (cc == 0.0) continue;
        const Eigen::Index kk = static_cast<Eigen::Index>(k);
        const double old = s(kk);
        const double target = std::clamp(old - col.dot(r) / cc, -1.0, 1.0);
        r += (target - old) * col;
        s(kk) = target;
        change = std::max(change, std::abs(target - old));
      }
      if (change < 1e-14) break;
    }
    return r;
  }

  std::shared_ptr<const Plant> plant_;
  Objective objective_;
  std::optional<PolyhedralSet> set_;
  std::optional<OutputConstraint> constraint_;
};

/// Minimizer of an LTI problem with a strictly convex quadratic objective,
/// from the dense KKT system of the reduced problem.
struct Optimum {
  Vec x;
  Vec u;
  Vec multipliers;
};

inline Optimum solve_optimum(const Problem& prob) {
  if (!as_lti(prob.plant()) || !std::holds_alternative<QuadraticObjective>(prob.objective()) ||
      l1_weight(prob.objective()) != 0.0) {
    throw DomainError("solve_optimum: needs an LTI plant and a smooth quadratic objective");
  }
  if (prob.input_set()) throw DomainError("solve_optimum: input sets are not supported");
  const LtiPlant& plant = *as_lti(prob.plant());
  const Eigen::Index p = prob.input_dim();
  const Vec zero = Vec::Zero(p);
  const Mat Hr = prob.reduced_hessian(zero);
  const Vec g0 = prob.reduced_gradient(zero);
  Optimum opt;
  if (!prob.output_constraint()) {
    opt.u = Hr.llt().solve(-g0);
  } else {
    const auto& c = *prob.output_constraint();
    const Eigen::Index r = c.A.rows();
    const Mat M = c.A * plant.H();
    Mat K = Mat::Zero(p + r, p + r);
    K.topLeftCorner(p, p) = Hr;
    K.topRightCorner(p, r) = M.transpose();
    K.bottomLeftCorner(r, p) = M;
    Vec rhs(p + r);
    rhs.head(p) = -g0;
    rhs.tail(r) = c.b - c.A * plant.R() * plant.w();
    const Vec sol = K.fullPivLu().solve(rhs);
    opt.u = sol.head(p);
    opt.multipliers = sol.tail(r);
  }
  opt.x = plant.steady_state(opt.u);
  return opt;
}

// ---------------------------------------------------------------------------
// Random instances

struct RandomInstanceOptions {
  double margin = 0.1;           // A ⪯ −margin·I in its symmetric part
  double hessian_shift = 0.1;    // objective Hessian GᵀG + shift·I
  Eigen::Index constraints = 0;  // rows of an output constraint Ax = b
};

inline constexpr const char* kRecipeVersion = "scaled-gaussian-1";

struct RandomInstance {
  LtiPlant plant;
  QuadraticObjective objective;
  std::optional<OutputConstraint> constraint;
  std::uint64_t seed = 0;
  std::string recipe = kRecipeVersion;
};

/// A = −MMᵀ − margin·I + (S − Sᵀ)/2 with M, S ~ N(0, 1/n) entrywise,
/// B, w ~ N(0,1), objective Hessian GᵀG + 0.1·I with G ~ N(0, 1/(n+p)),
/// linear terms ~ N(0,1). Output constraints use A ~ N(0, 1/n), b ~ N(0,1).
inline RandomInstance random_instance(Eigen::Index n, Eigen::Index p, std::uint64_t seed,
                                      const RandomInstanceOptions& opt = {}) {
  detail::require(n >= 1 && p >= 1, "random_instance: n and p must be positive");
  if (!(opt.margin > 0.0) || !(opt.hessian_shift > 0.0)) {
    throw DomainError("random_instance: margin and Hessian shift must be positive");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Eigen::Index r, Eigen::Index c, double scale) {
    Mat out(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) out(i, j) = scale * normal(rng);
    return out;
  };
  const double sn = 1.0 / std::sqrt(static_cast<double>(n));
  const Mat M = draw(n, n, sn);
  const Mat S = draw(n, n, sn);
  const Mat A = -M * M.transpose() - opt.margin * Mat::Identity(n, n) + 0.5 * (S - S.transpose());
  const Mat B = draw(n, p, 1.0);
  const Vec w = draw(n, 1, 1.0);
  const Mat G = draw(n + p, n + p, 1.0 / std::sqrt(static_cast<double>(n + p)));
  const Mat Hs = G.transpose() * G + opt.hessian_shift * Mat::Identity(n + p, n + p);

  QuadraticObjective obj;
  obj.hessian_xx = symmetrize(Hs.topLeftCorner(n, n));
  obj.hessian_xu = Hs.topRightCorner(n, p);
  obj.hessian_uu = symmetrize(Hs.bottomRightCorner(p, p));
  obj.linear_x = draw(n, 1, 1.0);
  obj.linear_u = draw(p, 1, 1.0);

  std::optional<OutputConstraint> con;
  if (opt.constraints > 0) {
    OutputConstraint c;
    c.A = draw(opt.constraints, n, sn);
    c.b = draw(opt.constraints, 1, 1.0);
    con = std::move(c);
  }
  return RandomInstance{LtiPlant(A, B, w), std::move(obj), std::move(con), seed, kRecipeVersion};
}

inline Problem make_problem(const RandomInstance& inst, std::optional<PolyhedralSet> input_set = std::nullopt) {
  return Problem(std::make_shared<const Plant>(inst.plant), inst.objective, std::move(input_set), inst.constraint);
}

}  // namespace aopt
