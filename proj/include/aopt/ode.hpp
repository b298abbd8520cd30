#pragma once

#include "aopt/core.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <functional>

namespace aopt {

/// Right-hand side of ṡ = F(t, s).
using VectorField = std::function<Vec(double, const Vec&)>;

/// One classical fourth-order Runge–Kutta step.
inline Vec rk4_step(const VectorField& field, double t, const Vec& s, double dt) {
  const Vec k1 = field(t, s);
  const Vec k2 = field(t + 0.5 * dt, s + 0.5 * dt * k1);
  const Vec k3 = field(t + 0.5 * dt, s + 0.5 * dt * k2);
  const Vec k4 = field(t + dt, s + dt * k3);
  return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// F(s) = M s + c.
struct AffineField {
  Mat M;
  Vec c;
};

/// Recovers (M, c) of an autonomous affine field by probing it at the origin
/// and at the unit vectors, then checks the fit at `check_point`. Throws
/// DomainError when the field is not affine there.
inline AffineField extract_affine(const VectorField& field, double t, Eigen::Index dim,
                                  const Vec& check_point, double rel_tol = 1e-7) {
  AffineField out;
  out.c = field(t, Vec::Zero(dim));
  out.M.resize(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    out.M.col(i) = field(t, Vec::Unit(dim, i)) - out.c;
  }
  const Vec probe = field(t, check_point);
  const Vec fit = out.M * check_point + out.c;
  const double scale = std::max({1.0, probe.norm(), fit.norm()});
  if ((probe - fit).norm() > rel_tol * scale) {
    throw DomainError("extract_affine: vector field is not affine in the state");
  }
  return out;
}

/// Exact flow map of ṡ = M s + c over a fixed step:
/// s(t+Δ) = Φ s(t) + γ with Φ = e^{MΔ}, γ = ∫₀^Δ e^{Mr} dr · c.
struct AffineFlow {
  Mat Phi;
  Vec gamma;

  Vec step(const Vec& s) const { return Phi * s + gamma; }
};

inline AffineFlow affine_flow(const AffineField& f, double dt) {
  const Eigen::Index n = f.M.rows();
  Mat aug = Mat::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = f.M * dt;
  aug.topRightCorner(n, 1) = f.c * dt;
  const Mat E = aug.exp();
  return {E.topLeftCorner(n, n), E.topRightCorner(n, 1)};
}

}  // namespace aopt
