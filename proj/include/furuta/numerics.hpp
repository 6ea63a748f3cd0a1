#pragma once

// Dense real-matrix kernel shared by every other header. Matrices are plain
// Eigen::MatrixXd; the functions here add the shape/finiteness contracts and
// map Eigen's status codes onto the library's exception types.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "furuta/error.hpp"

namespace furuta {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;

/// Relative pivot threshold below which an LU factorization counts as singular.
inline constexpr double kSingularPivotTolerance = 1e-12;

/// Relative asymmetry tolerated by cholesky().
inline constexpr double kSymmetryTolerance = 1e-10;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) {
    throw NumericalError(what + ": matrix contains non-finite entries");
  }
}

inline void require_square(const Matrix& m, const std::string& what) {
  if (m.rows() < 1 || m.rows() != m.cols()) {
    throw DimensionError(what + ": expected a non-empty square matrix, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Induced infinity norm (max absolute row sum).
inline double norm_inf(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// All eigenvalues with algebraic multiplicity, in no particular order.
///
/// Hessenberg reduction followed by shifted (Francis double-shift) QR, capped at
/// 100 sweeps per row.
inline std::vector<Complex> eigenvalues(const Matrix& m) {
  require_square(m, "eigenvalues");
  require_finite(m, "eigenvalues");
  const Eigen::Index n = m.rows();
  if (n == 1) {
    return {Complex(m(0, 0), 0.0)};
  }
  Eigen::EigenSolver<Matrix> solver;
  solver.setMaxIterations(100 * n);
  solver.compute(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigenvalues: QR iteration did not converge");
  }
  const auto& values = solver.eigenvalues();
  return {values.data(), values.data() + values.size()};
}

inline double spectral_abscissa(const std::vector<Complex>& values) {
  double out = -std::numeric_limits<double>::infinity();
  for (const auto& v : values) out = std::max(out, v.real());
  return out;
}

inline double spectral_radius(const std::vector<Complex>& values) {
  double out = 0.0;
  for (const auto& v : values) out = std::max(out, std::abs(v));
  return out;
}

namespace detail {

inline Eigen::PartialPivLU<Matrix> checked_lu(const Matrix& m, const std::string& what) {
  require_square(m, what);
  require_finite(m, what);
  Eigen::PartialPivLU<Matrix> lu(m);
  const double scale = max_abs(m);
  const double smallest_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (scale == 0.0 || smallest_pivot <= kSingularPivotTolerance * scale) {
    throw SingularityError(what + ": matrix is singular to working precision");
  }
  return lu;
}

}  // namespace detail

/// Solves m * X = rhs by LU with partial pivoting.
inline Matrix solve_linear(const Matrix& m, const Matrix& rhs) {
  if (rhs.rows() != m.rows()) {
    throw DimensionError("solve_linear: right-hand side has " + std::to_string(rhs.rows()) +
                         " rows, matrix has " + std::to_string(m.rows()));
  }
  require_finite(rhs, "solve_linear");
  const auto lu = detail::checked_lu(m, "solve_linear");
  return lu.solve(rhs);
}

inline Matrix inverse(const Matrix& m) {
  return solve_linear(m, Matrix::Identity(m.rows(), m.cols()));
}

/// Determinant via the same pivoted LU as solve_linear; returns 0 for singular input.
inline double determinant(const Matrix& m) {
  require_square(m, "determinant");
  require_finite(m, "determinant");
  return Eigen::PartialPivLU<Matrix>(m).determinant();
}

/// Lower-triangular L with L * L^T == s. Never adds jitter; callers own regularization.
inline Matrix cholesky(const Matrix& s) {
  require_square(s, "cholesky");
  require_finite(s, "cholesky");
  const double scale = std::max(max_abs(s), 1.0e-300);
  if (max_abs(s - s.transpose()) > kSymmetryTolerance * scale) {
    throw DefinitenessError("cholesky: matrix is not symmetric");
  }
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) {
    throw DefinitenessError("cholesky: matrix is not positive definite");
  }
  return llt.matrixL();
}

/// e^m by scaling and squaring around a Pade core.
inline Matrix matrix_exponential(const Matrix& m) {
  require_square(m, "matrix_exponential");
  require_finite(m, "matrix_exponential");
  return m.exp();
}

/// Symmetric square root of a symmetric positive semi-definite matrix.
/// Small negative eigenvalues from round-off are clamped to zero.
inline Matrix psd_sqrt(const Matrix& s) {
  require_square(s, "psd_sqrt");
  require_finite(s, "psd_sqrt");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

inline bool is_symmetric_psd(const Matrix& s, double tol = 1e-10) {
  if (s.rows() != s.cols()) return false;
  if (s.size() == 0) return true;
  const double scale = std::max(max_abs(s), 1.0);
  if (max_abs(s - s.transpose()) > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -tol * scale;
}

/// Block-diagonal assembly [[a, 0], [0, b]].
inline Matrix block_diagonal(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace furuta
