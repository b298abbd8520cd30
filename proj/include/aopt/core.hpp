#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace aopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands with incompatible shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A mathematical precondition does not hold (matrix not Hurwitz, metric not
/// positive definite, point outside a set, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class NotHurwitz : public DomainError {
 public:
  using DomainError::DomainError;
};

class LicqViolation : public DomainError {
 public:
  using DomainError::DomainError;
};

class InfeasiblePoint : public DomainError {
 public:
  using DomainError::DomainError;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

}  // namespace detail

inline bool is_symmetric(const Mat& M, double tol = 1e-10) {
  if (M.rows() != M.cols()) return false;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline Mat symmetrize(const Mat& M) { return 0.5 * (M + M.transpose()); }

inline double min_eig(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eig(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

/// Induced 2-norm (largest singular value).
inline double op_norm(const Mat& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(M);
  return svd.singularValues()(0);
}

/// max Re(λ) over the spectrum of a square matrix.
inline double spectral_abscissa(const Mat& A) {
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().real().maxCoeff();
}

/// max |λ| over the spectrum of a square matrix.
inline double spectral_radius(const Mat& A) {
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Solves AᵀX + XA = −Q for symmetric Q by complex Schur reduction
/// (Bartels–Stewart). Requires λᵢ(A) + conj(λⱼ(A)) ≠ 0 for all i, j.
inline Mat solve_continuous_lyapunov(const Mat& A, const Mat& Q) {
  detail::require(A.rows() == A.cols() && Q.rows() == A.rows() && Q.cols() == A.cols(),
                  "solve_continuous_lyapunov: A and Q must be square and of equal size");
  using CMat = Eigen::MatrixXcd;
  const Eigen::Index n = A.rows();
  Eigen::ComplexSchur<Mat> schur(A);
  if (schur.info() != Eigen::Success) throw Error("solve_continuous_lyapunov: Schur factorization failed");
  const CMat& U = schur.matrixU();
  const CMat& T = schur.matrixT();
  const CMat C = U.adjoint() * Q.cast<std::complex<double>>() * U;

  // Tᴴ Y + Y T = −C, column by column; Tᴴ is lower triangular.
  CMat Y = CMat::Zero(n, n);
  const CMat Th = T.adjoint();
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXcd rhs = -C.col(j);
    for (Eigen::Index k = 0; k < j; ++k) rhs -= Y.col(k) * T(k, j);
    CMat lhs = Th;
    lhs.diagonal().array() += T(j, j);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(lhs(i, i)) < 1e-14 * std::max(1.0, T.cwiseAbs().maxCoeff())) {
        throw DomainError("solve_continuous_lyapunov: A and −Aᵀ share an eigenvalue");
      }
    }
    Y.col(j) = lhs.triangularView<Eigen::Lower>().solve(rhs);
  }
  const Mat X = (U * Y * U.adjoint()).real();
  return symmetrize(X);
}

}  // namespace aopt
