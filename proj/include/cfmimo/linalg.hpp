#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace cfmimo {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

/// Raised when a linear system or factorization cannot be solved numerically.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline bool is_finite(cd z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

/// Hermitian part (A + A^H)/2; used to scrub rounding asymmetry before eigen solves.
inline CMat hermitian_part(const CMat& a) { return 0.5 * (a + a.adjoint()); }

inline double min_eigenvalue(const CMat& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Principal square root of a Hermitian PSD matrix. Eigenvalues below
/// -tol * max(1, |lambda_max|) are rejected; small negatives are clipped to zero.
inline CMat psd_sqrt(const CMat& a, double tol = 1e-9) {
  if (a.rows() != a.cols()) throw std::invalid_argument("psd_sqrt: matrix must be square");
  if (a.rows() == 0) return CMat(0, 0);
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(a));
  if (es.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigendecomposition failed");
  const RVec& ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol * scale) throw std::invalid_argument("psd_sqrt: matrix is not positive semidefinite");
  RVec root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().adjoint();
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
inline CMat hpd_inverse(const CMat& a, const char* what = "hpd_inverse") {
  Eigen::LLT<CMat> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": matrix not positive definite");
  return llt.solve(CMat::Identity(a.rows(), a.cols()));
}

}  // namespace cfmimo
