#pragma once

#include "aopt/core.hpp"

#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

namespace aopt {

/// Constraint data of a polyhedron {v : Ev = e, Gv ≤ g, lower ≤ v ≤ upper}.
/// Empty blocks are allowed; bound vectors may hold ±∞ or be left empty.
struct PolyhedronData {
  Mat eq_matrix;
  Vec eq_rhs;
  Mat ineq_matrix;
  Vec ineq_rhs;
  Vec lower;
  Vec upper;
};

/// Nonempty polyhedral set. Bounds are folded into the inequality rows after
/// the general ones: coordinate i contributes −vᵢ ≤ −lowerᵢ at
/// `lower_index(i)` and vᵢ ≤ upperᵢ at `upper_index(i)`.
class PolyhedralSet {
 public:
  PolyhedralSet(Eigen::Index p, PolyhedronData data, std::optional<Vec> feasible_point = std::nullopt,
                double feas_tol = 1e-8)
      : p_(p) {
    detail::require(p >= 1, "PolyhedralSet: dimension must be positive");
    auto fix_empty = [p](Mat& M, Vec& r, const char* what) {
      if (M.size() == 0 && r.size() == 0) M.resize(0, p);
      detail::require(M.cols() == p && M.rows() == r.size(), what);
    };
    fix_empty(data.eq_matrix, data.eq_rhs, "PolyhedralSet: equality block has inconsistent shape");
    fix_empty(data.ineq_matrix, data.ineq_rhs, "PolyhedralSet: inequality block has inconsistent shape");
    if (data.lower.size() == 0) data.lower = Vec::Constant(p, -kInf);
    if (data.upper.size() == 0) data.upper = Vec::Constant(p, kInf);
    detail::require(data.lower.size() == p && data.upper.size() == p, "PolyhedralSet: bounds must have p entries");
    if ((data.lower.array() > data.upper.array()).any()) throw DomainError("PolyhedralSet: lower > upper");

    E_ = std::move(data.eq_matrix);
    e_ = std::move(data.eq_rhs);
    general_rows_ = data.ineq_matrix.rows();
    has_bounds_ = data.lower.array().isFinite().any() || data.upper.array().isFinite().any();
    const Eigen::Index rows = general_rows_ + 2 * p;
    G_ = Mat::Zero(rows, p);
    g_ = Vec::Zero(rows);
    G_.topRows(general_rows_) = data.ineq_matrix;
    g_.head(general_rows_) = data.ineq_rhs;
    for (Eigen::Index i = 0; i < p; ++i) {
      G_(lower_index(i), i) = -1.0;
      g_(lower_index(i)) = -data.lower(i);
      G_(upper_index(i), i) = 1.0;
      g_(upper_index(i)) = data.upper(i);
    }
    lower_ = std::move(data.lower);
    upper_ = std::move(data.upper);

    if (feasible_point) {
      detail::require(feasible_point->size() == p, "PolyhedralSet: feasible point has wrong size");
      point_ = *feasible_point;
    } else if (is_box()) {
      point_ = Vec::Zero(p).cwiseMax(lower_).cwiseMin(upper_);
    } else if (general_rows_ == 0 && !has_bounds_) {
      point_ = E_.completeOrthogonalDecomposition().solve(e_);
    } else {
      throw DomainError("PolyhedralSet: a feasible point is required for general polyhedra");
    }
    if (!contains(point_, feas_tol)) throw InfeasiblePoint("PolyhedralSet: stored point is not feasible (empty set?)");
  }

  static PolyhedralSet box(const Vec& lower, const Vec& upper) {
    detail::require(lower.size() == upper.size(), "box: bound sizes differ");
    return PolyhedralSet(lower.size(), PolyhedronData{Mat(), Vec(), Mat(), Vec(), lower, upper});
  }

  /// {v ≥ 0, Σv = total}.
  static PolyhedralSet simplex(Eigen::Index p, double total = 1.0) {
    PolyhedronData d;
    d.eq_matrix = Mat::Ones(1, p);
    d.eq_rhs = Vec::Constant(1, total);
    d.lower = Vec::Zero(p);
    return PolyhedralSet(p, std::move(d), Vec::Constant(p, total / static_cast<double>(p)));
  }

  Eigen::Index dim() const { return p_; }
  const Mat& eq_matrix() const { return E_; }
  const Vec& eq_rhs() const { return e_; }
  /// All inequality rows, general ones first, then two bound rows per coordinate.
  const Mat& ineq_matrix() const { return G_; }
  const Vec& ineq_rhs() const { return g_; }
  Eigen::Index general_ineq_count() const { return general_rows_; }
  Eigen::Index lower_index(Eigen::Index i) const { return general_rows_ + 2 * i; }
  Eigen::Index upper_index(Eigen::Index i) const { return general_rows_ + 2 * i + 1; }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  const Vec& feasible_point() const { return point_; }
  bool is_box() const { return E_.rows() == 0 && general_rows_ == 0; }

  double eq_violation(const Vec& u) const {
    return E_.rows() == 0 ? 0.0 : (E_ * u - e_).cwiseAbs().maxCoeff();
  }
  double ineq_violation(const Vec& u) const {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < G_.rows(); ++j) {
      if (!std::isfinite(g_(j))) continue;
      worst = std::max(worst, G_.row(j).dot(u) - g_(j));
    }
    return worst;
  }
  bool contains(const Vec& u, double tol = 1e-8) const {
    detail::require(u.size() == p_, "PolyhedralSet: point dimension mismatch");
    return eq_violation(u) <= tol && ineq_violation(u) <= tol;
  }

 private:
  Eigen::Index p_;
  Mat E_;
  Vec e_;
  Mat G_;
  Vec g_;
  Eigen::Index general_rows_ = 0;
  bool has_bounds_ = false;
  Vec lower_, upper_;
  Vec point_;
};

/// Indices j with |Gⱼu − gⱼ| ≤ tol.
inline std::vector<Eigen::Index> active_set(const PolyhedralSet& U, const Vec& u, double tol = 1e-8) {
  if (!U.contains(u, tol)) throw InfeasiblePoint("active_set: point is outside the set");
  std::vector<Eigen::Index> idx;
  const Mat& G = U.ineq_matrix();
  const Vec& g = U.ineq_rhs();
  for (Eigen::Index j = 0; j < G.rows(); ++j) {
    if (std::isfinite(g(j)) && std::abs(G.row(j).dot(u) - g(j)) <= tol) idx.push_back(j);
  }
  return idx;
}

namespace detail {

inline Mat stack_active(const PolyhedralSet& U, const std::vector<Eigen::Index>& active) {
  const Eigen::Index s = U.eq_matrix().rows();
  Mat N(s + static_cast<Eigen::Index>(active.size()), U.dim());
  N.topRows(s) = U.eq_matrix();
  for (std::size_t k = 0; k < active.size(); ++k) N.row(s + static_cast<Eigen::Index>(k)) = U.ineq_matrix().row(active[k]);
  return N;
}

inline bool full_row_rank(const Mat& N, double tol) {
  if (N.rows() == 0) return true;
  if (N.rows() > N.cols()) return false;
  Eigen::JacobiSVD<Mat> svd(N);
  const Vec& sv = svd.singularValues();
  return sv(sv.size() - 1) > tol * std::max(1.0, sv(0));
}

// min ‖v − N c‖ with c_i free for i < n_free and c_i ≥ 0 otherwise
// (Lawson–Hanson with the free block kept passive).
inline Vec nnls_partial(const Mat& N, const Vec& v, Eigen::Index n_free) {
  const Eigen::Index m = N.cols();
  Vec c = Vec::Zero(m);
  if (m == 0) return c;
  std::vector<bool> passive(m, false);
  for (Eigen::Index i = 0; i < n_free; ++i) passive[i] = true;

  auto solve_passive = [&]() {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < m; ++i)
      if (passive[i]) cols.push_back(i);
    Vec s = Vec::Zero(m);
    if (cols.empty()) return s;
    Mat Np(N.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) Np.col(static_cast<Eigen::Index>(k)) = N.col(cols[k]);
    const Vec sp = Np.colPivHouseholderQr().solve(v);
    for (std::size_t k = 0; k < cols.size(); ++k) s(cols[k]) = sp(static_cast<Eigen::Index>(k));
    return s;
  };

  c = solve_passive();
  const double scale = std::max(1.0, v.norm() * std::max(1.0, N.cwiseAbs().maxCoeff()));
  const double tol = 1e-13 * scale;
  for (int outer = 0; outer < 3 * static_cast<int>(m) + 10; ++outer) {
    const Vec grad = N.transpose() * (v - N * c);
    Eigen::Index enter = -1;
    double best = tol;
    for (Eigen::Index j = n_free; j < m; ++j) {
      if (!passive[j] && grad(j) > best) {
        best = grad(j);
        enter = j;
      }
    }
    if (enter < 0) break;
    passive[enter] = true;
    for (int inner = 0; inner < 3 * static_cast<int>(m) + 10; ++inner) {
      const Vec s = solve_passive();
      double alpha = 1.0;
      bool clipped = false;
      for (Eigen::Index j = n_free; j < m; ++j) {
        if (passive[j] && s(j) <= 0.0) {
          const double a = c(j) / (c(j) - s(j));
          if (a < alpha) alpha = a;
          clipped = true;
        }
      }
      if (!clipped) {
        c = s;
        break;
      }
      c += alpha * (s - c);
      for (Eigen::Index j = n_free; j < m; ++j) {
        if (passive[j] && c(j) <= 1e-15 * scale) {
          passive[j] = false;
          c(j) = 0.0;
        }
      }
    }
  }
  return c;
}

}  // namespace detail

/// True iff [E; G_active] has full row rank at u.
inline bool is_regular(const PolyhedralSet& U, const Vec& u, double tol = 1e-10, double active_tol = 1e-8) {
  std::vector<Eigen::Index> active;
  const Mat& G = U.ineq_matrix();
  const Vec& g = U.ineq_rhs();
  for (Eigen::Index j = 0; j < G.rows(); ++j) {
    if (std::isfinite(g(j)) && std::abs(G.row(j).dot(u) - g(j)) <= active_tol) active.push_back(j);
  }
  return detail::full_row_rank(detail::stack_active(U, active), tol);
}

/// Split of v into its tangent-cone projection w and the normal-cone part η = v − w.
struct NormalDecomposition {
  Vec w;
  Vec eta;
};

inline NormalDecomposition normal_decomposition(const PolyhedralSet& U, const Vec& u, const Vec& v,
                                                double active_tol = 1e-8) {
  detail::require(v.size() == U.dim(), "project_tangent: direction dimension mismatch");
  const std::vector<Eigen::Index> active = active_set(U, u, active_tol);
  if (U.is_box()) {
    Vec w = v;
    for (Eigen::Index j : active) {
      const Eigen::Index i = (j - U.general_ineq_count()) / 2;
      const bool is_upper = ((j - U.general_ineq_count()) % 2) == 1;
      if (is_upper ? w(i) > 0.0 : w(i) < 0.0) w(i) = 0.0;
    }
    return {w, v - w};
  }
  const Mat N = detail::stack_active(U, active);
  if (!detail::full_row_rank(N, 1e-10)) throw LicqViolation("project_tangent: active constraints are dependent");
  if (N.rows() == 0) return {v, Vec::Zero(v.size())};
  // η = P_N(v) on N_u = {Eᵀμ + G_Aᵀλ : λ ≥ 0}; then w = v − η by Moreau.
  const Vec c = detail::nnls_partial(N.transpose(), v, U.eq_matrix().rows());
  Vec eta = N.transpose() * c;
  return {v - eta, eta};
}

/// argmin_{w ∈ T_u U} ‖v − w‖².
inline Vec project_tangent(const PolyhedralSet& U, const Vec& u, const Vec& v, double active_tol = 1e-8) {
  return normal_decomposition(U, u, v, active_tol).w;
}

/// Euclidean projection of z onto U. Boxes clamp; general polyhedra run a
/// primal active-set method from the stored feasible point.
inline Vec project_point(const PolyhedralSet& U, const Vec& z) {
  detail::require(z.size() == U.dim(), "project_point: dimension mismatch");
  if (U.is_box()) return z.cwiseMax(U.lower()).cwiseMin(U.upper());
  const Mat& E = U.eq_matrix();
  const Mat& G = U.ineq_matrix();
  const Vec& g = U.ineq_rhs();
  const Eigen::Index s = E.rows();
  const Eigen::Index p = U.dim();
  const double scale = std::max({1.0, z.cwiseAbs().maxCoeff(), U.feasible_point().cwiseAbs().maxCoeff()});
  const double tol = 1e-12 * scale;

  Vec u = U.feasible_point();
  std::vector<Eigen::Index> work;
  for (int it = 0; it < 50 * static_cast<int>(G.rows() + p) + 50; ++it) {
    Mat A(s + static_cast<Eigen::Index>(work.size()), p);
    A.topRows(s) = E;
    for (std::size_t k = 0; k < work.size(); ++k) A.row(s + static_cast<Eigen::Index>(k)) = G.row(work[k]);
    const Vec grad = u - z;
    // least-squares multipliers ν of Aᵀν ≈ −grad; the residual is the projected step
    Vec nu = Vec::Zero(A.rows());
    Vec d = -grad;
    if (A.rows() > 0) {
      const auto cod = A.transpose().completeOrthogonalDecomposition();
      nu = cod.solve(-grad);
      d = -grad - A.transpose() * nu;
    }
    if (d.norm() <= tol) {
      Eigen::Index drop = -1;
      double most = -1e-12 * scale;
      for (std::size_t k = 0; k < work.size(); ++k) {
        const double lam = nu(s + static_cast<Eigen::Index>(k));
        if (lam < most) {
          most = lam;
          drop = static_cast<Eigen::Index>(k);
        }
      }
      if (drop < 0) return u;
      work.erase(work.begin() + drop);
      continue;
    }
    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index j = 0; j < G.rows(); ++j) {
      if (!std::isfinite(g(j)) || std::find(work.begin(), work.end(), j) != work.end()) continue;
      const double gd = G.row(j).dot(d);
      if (gd <= 1e-14 * d.norm()) continue;
      const double a = std::max(0.0, (g(j) - G.row(j).dot(u)) / gd);
      if (a < alpha) {
        alpha = a;
        blocking = j;
      }
    }
    u += alpha * d;
    if (blocking >= 0) work.push_back(blocking);
  }
  throw Error("project_point: active-set iteration did not terminate");
}

inline double distance_to_set(const PolyhedralSet& U, const Vec& z) { return (z - project_point(U, z)).norm(); }

}  // namespace aopt
