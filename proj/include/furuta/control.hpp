#pragma once

// State-feedback synthesis and closed-loop analysis: continuous-time LQR,
// tracking prefilters, the generalized dynamic controller
//
//   x_c' = A_c x_c + B_c x,    u = r - (C_c x_c + D_c x),
//
// the plant/controller augmented matrix, zero-order-hold discretization and
// spectral stability tests.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "furuta/numerics.hpp"
#include "furuta/plant.hpp"

namespace furuta {

/// Linear controller with internal state x_c of size nxc driven by the plant state.
struct DynamicController {
  Matrix A_c;  // nxc x nxc
  Matrix B_c;  // nxc x nx
  Matrix C_c;  // nu x nxc
  Matrix D_c;  // nu x nx

  Eigen::Index nxc() const { return A_c.rows(); }
  Eigen::Index nx() const { return B_c.cols(); }
  Eigen::Index nu() const { return D_c.rows(); }

  void validate() const {
    require_square(A_c, "DynamicController.A_c");
    if (B_c.rows() != nxc() || B_c.cols() < 1) {
      throw DimensionError("DynamicController: B_c must be nxc x nx");
    }
    if (C_c.cols() != nxc() || C_c.rows() < 1) {
      throw DimensionError("DynamicController: C_c must be nu x nxc");
    }
    if (D_c.rows() != C_c.rows() || D_c.cols() != B_c.cols()) {
      throw DimensionError("DynamicController: D_c must be nu x nx");
    }
  }

  /// Static law u = r - K x embedded with a single decoupled controller state.
  static DynamicController from_gain(const Matrix& k, double controller_pole = 0.0) {
    return {Matrix::Constant(1, 1, controller_pole), Matrix::Zero(1, k.cols()),
            Matrix::Zero(k.rows(), 1), k};
  }
};

/// Quadratic cost weights for the regulator.
struct LqrWeights {
  Matrix Q;
  Matrix R;

  void validate(Eigen::Index nx, Eigen::Index nu) const {
    if (Q.rows() != nx || Q.cols() != nx) throw DimensionError("LqrWeights: Q must be nx x nx");
    if (R.rows() != nu || R.cols() != nu) throw DimensionError("LqrWeights: R must be nu x nu");
    if (!is_symmetric_psd(Q)) throw DefinitenessError("LqrWeights: Q must be symmetric PSD");
    // Throws DefinitenessError for indefinite or asymmetric R.
    (void)cholesky(R);
  }
};

struct StabilityReport {
  std::vector<Complex> eigenvalues;
  double spectral_abscissa = 0.0;
  double spectral_radius = 0.0;
  bool stable = false;
};

/// Eigenvalues plus the domain-appropriate stability verdict: open left
/// half-plane in continuous time, open unit disc in discrete time. For the
/// noise-driven closed loop this is also the mean-square stability test.
inline StabilityReport stability_report(const Matrix& m, const TimeDomain& domain) {
  StabilityReport report;
  report.eigenvalues = eigenvalues(m);
  report.spectral_abscissa = spectral_abscissa(report.eigenvalues);
  report.spectral_radius = spectral_radius(report.eigenvalues);
  report.stable = domain.is_discrete() ? report.spectral_radius < 1.0
                                       : report.spectral_abscissa < 0.0;
  return report;
}

/// Solves F X + X F^T + Q = 0 by a Kronecker-product linear solve.
inline Matrix solve_continuous_lyapunov(const Matrix& f, const Matrix& q) {
  require_square(f, "solve_continuous_lyapunov");
  const Eigen::Index n = f.rows();
  if (q.rows() != n || q.cols() != n) throw DimensionError("solve_continuous_lyapunov: Q shape");
  const Matrix eye = Matrix::Identity(n, n);
  Matrix kron = Matrix::Zero(n * n, n * n);
  // vec(F X) = (I kron F) vec(X), vec(X F^T) = (F kron I) vec(X), column-major vec.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n) += eye(i, j) * f + f(i, j) * eye;
    }
  }
  const Vector rhs = -Eigen::Map<const Vector>(Matrix(q).data(), n * n);
  const Vector x = solve_linear(kron, rhs);
  Matrix out = Eigen::Map<const Matrix>(x.data(), n, n);
  return 0.5 * (out + out.transpose());
}

/// Stationary covariance X = F X F^T + Q of a stable discrete system, by
/// squared-step (doubling) fixed-point iteration.
inline Matrix solve_discrete_lyapunov(const Matrix& f, const Matrix& q,
                                      double tolerance = 1e-14, int max_iterations = 200) {
  require_square(f, "solve_discrete_lyapunov");
  if (q.rows() != f.rows() || q.cols() != f.cols()) {
    throw DimensionError("solve_discrete_lyapunov: Q shape");
  }
  if (!(spectral_radius(eigenvalues(f)) < 1.0)) {
    throw NumericalError("solve_discrete_lyapunov: F must have spectral radius < 1");
  }
  Matrix x = q;
  Matrix power = f;
  for (int it = 0; it < max_iterations; ++it) {
    const Matrix increment = power * x * power.transpose();
    x += increment;
    power = power * power;
    if (!x.allFinite()) break;
    if (max_abs(increment) <= tolerance * std::max(1.0, max_abs(x))) {
      return 0.5 * (x + x.transpose());
    }
  }
  throw NumericalError("solve_discrete_lyapunov: iteration diverged (is F stable?)");
}

namespace detail {

inline bool is_hurwitz(const Matrix& m) { return spectral_abscissa(eigenvalues(m)) < 0.0; }

/// Initial stabilizing gain by eigenvalue shifting: with beta large enough that
/// -(A + beta I) is Hurwitz, solve (A + beta I) W + W (A + beta I)^T = 2 B B^T;
/// then A - B B^T W^{-1} satisfies a Lyapunov inequality and is Hurwitz.
/// Returns nothing when W is numerically singular (weakly controllable pairs).
inline std::optional<Matrix> shifted_stabilizing_gain(const Matrix& a, const Matrix& b) {
  double min_real = 0.0;
  double max_mod = 0.0;
  for (const auto& v : eigenvalues(a)) {
    min_real = std::min(min_real, v.real());
    max_mod = std::max(max_mod, std::abs(v));
  }
  const double beta = std::max(1.0, -min_real) + 0.1 * max_mod + 1.0;
  const Matrix shifted = a + beta * Matrix::Identity(a.rows(), a.cols());
  try {
    const Matrix w = solve_continuous_lyapunov(-shifted, 2.0 * b * b.transpose());
    Matrix k = b.transpose() * solve_linear(w, Matrix::Identity(w.rows(), w.cols()));
    if (k.allFinite() && is_hurwitz(a - b * k)) return k;
  } catch (const Error&) {
  }
  return std::nullopt;
}

/// Gain from the stable invariant subspace [U1; U2] of the Hamiltonian
/// [[A, -B R^-1 B^T], [-Q, -A^T]] with P = U2 U1^{-1}. Less accurate than the
/// Newton fixed point but robust to poor scaling, so it serves as a fallback
/// starting point.
inline std::optional<Matrix> hamiltonian_gain(const Matrix& a, const Matrix& b, const Matrix& q,
                                              const Matrix& r) {
  const Eigen::Index n = a.rows();
  Matrix h(2 * n, 2 * n);
  h << a, -b * solve_linear(r, b.transpose()), -q, -a.transpose();
  Eigen::ComplexEigenSolver<Matrix> solver(h);
  if (solver.info() != Eigen::Success) return std::nullopt;
  Eigen::MatrixXcd basis(2 * n, n);
  Eigen::Index found = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (solver.eigenvalues()[i].real() < 0.0) {
      if (found == n) return std::nullopt;
      basis.col(found++) = solver.eigenvectors().col(i);
    }
  }
  if (found != n) return std::nullopt;
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(basis.topRows(n).transpose());
  if (!(std::abs(lu.determinant()) > 0.0)) return std::nullopt;
  Matrix p = lu.solve(basis.bottomRows(n).transpose()).transpose().real();
  p = 0.5 * (p + p.transpose());
  Matrix k = solve_linear(r, b.transpose() * p);
  if (k.allFinite() && is_hurwitz(a - b * k)) return k;
  return std::nullopt;
}

/// Stabilizing starting gains for the Newton iteration, best first: zero for a
/// Hurwitz A; otherwise the Hamiltonian-subspace gain (near-optimal and well
/// scaled), then eigenvalue shifting (robust but can be huge for weakly
/// controllable pairs, which makes the Lyapunov steps ill-conditioned).
inline std::vector<Matrix> initial_stabilizing_gains(const Matrix& a, const Matrix& b, const Matrix& q,
                                                     const Matrix& r) {
  if (is_hurwitz(a)) return {Matrix::Zero(b.cols(), a.rows())};
  std::vector<Matrix> out;
  try {
    if (auto k = hamiltonian_gain(a, b, q, r)) out.push_back(std::move(*k));
  } catch (const Error&) {
  }
  if (auto k = shifted_stabilizing_gain(a, b)) out.push_back(std::move(*k));
  if (out.empty()) throw SynthesisError("solve_care: no stabilizing initial gain (pair not stabilizable?)");
  return out;
}

/// Kleinman-Newton iteration from a stabilizing gain; returns P.
inline Matrix kleinman_newton(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, Matrix k,
                              double tolerance, int max_iterations) {
  Matrix p = Matrix::Zero(a.rows(), a.cols());
  for (int it = 0; it < max_iterations; ++it) {
    const Matrix closed = a - b * k;
    Matrix next;
    try {
      next = solve_continuous_lyapunov(closed.transpose(), q + k.transpose() * r * k);
    } catch (const Error& e) {
      throw SynthesisError(std::string("solve_care: Lyapunov step failed: ") + e.what());
    }
    if (!next.allFinite()) throw SynthesisError("solve_care: iteration diverged");
    const double change = max_abs(next - p);
    p = next;
    k = solve_linear(r, b.transpose() * p);
    if (it > 0 && change <= tolerance * std::max(1.0, max_abs(p))) return p;
  }
  throw SynthesisError("solve_care: Newton iteration did not converge");
}

}  // namespace detail

/// Riccati residual A^T P + P A - P B R^{-1} B^T P + Q.
inline Matrix care_residual(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                            const Matrix& p) {
  return a.transpose() * p + p * a - p * b * solve_linear(r, b.transpose()) * p + q;
}

/// Stabilizing solution of the continuous algebraic Riccati equation by
/// Kleinman-Newton iteration.
inline Matrix solve_care(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                         double tolerance = 1e-10, int max_iterations = 200) {
  require_square(a, "solve_care");
  if (b.rows() != a.rows()) throw DimensionError("solve_care: B must have nx rows");
  require_finite(b, "solve_care");
  LqrWeights{q, r}.validate(a.rows(), b.cols());

  // Newton from each candidate start until one yields an accurate stabilizing
  // solution; otherwise the last failure is reported. The residual is judged
  // against the size of the Riccati terms: a nearly uncontrollable unstable
  // mode makes P huge and the cancellation error grows with it.
  std::string failure;
  for (const Matrix& k0 : detail::initial_stabilizing_gains(a, b, q, r)) {
    try {
      const Matrix p = detail::kleinman_newton(a, b, q, r, k0, tolerance, max_iterations);
      const double scale = std::max({norm_inf(q), norm_inf(a.transpose() * p),
                                     norm_inf(p * b * solve_linear(r, b.transpose()) * p), 1e-300});
      if (norm_inf(care_residual(a, b, q, r, p)) > 1e-8 * scale) {
        throw SynthesisError("solve_care: Riccati residual above tolerance");
      }
      if (!detail::is_hurwitz(a - b * solve_linear(r, b.transpose() * p))) {
        throw SynthesisError("solve_care: closed loop is not stable");
      }
      return p;
    } catch (const SynthesisError& e) {
      failure = e.what();
    }
  }
  throw SynthesisError(failure);
}

/// Continuous-time LQR gain K = R^{-1} B^T P for the law u = -K x.
inline Matrix lqr_gain(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r) {
  const Matrix p = solve_care(a, b, q, r);
  return solve_linear(r, b.transpose() * p);
}

namespace detail {

inline Matrix tracked_rows(const StateSpace& ss, const std::vector<int>& tracked_outputs) {
  if (tracked_outputs.empty()) return ss.C;
  Matrix c(static_cast<Eigen::Index>(tracked_outputs.size()), ss.nx());
  for (std::size_t k = 0; k < tracked_outputs.size(); ++k) {
    const int row = tracked_outputs[k];
    if (row < 0 || row >= ss.ny()) throw DimensionError("prefilter: tracked output out of range");
    c.row(static_cast<Eigen::Index>(k)) = ss.C.row(row);
  }
  return c;
}

inline Matrix prefilter_from_steady_state(const Matrix& c, const Matrix& loop, const Matrix& b) {
  if (c.rows() != b.cols()) {
    throw PrefilterError("prefilter: number of tracked outputs must equal number of inputs");
  }
  try {
    const Matrix dc_gain = c * solve_linear(loop, b);
    return -solve_linear(dc_gain, Matrix::Identity(dc_gain.rows(), dc_gain.cols()));
  } catch (const SingularityError& e) {
    throw PrefilterError(std::string("prefilter: ") + e.what());
  }
}

}  // namespace detail

/// Reference prefilter for the static law: F = -(C (A - B K - I)^{-1} B)^{-1}.
///
/// This is the z = 1 steady-state gain, so `ss` must be the discrete-time model.
/// `tracked_outputs` selects the rows of C that follow the reference (all rows
/// when empty); their count must equal the number of inputs.
inline Matrix static_prefilter(const StateSpace& ss, const Matrix& k,
                               const std::vector<int>& tracked_outputs = {}) {
  if (k.rows() != ss.nu() || k.cols() != ss.nx()) throw DimensionError("static_prefilter: K shape");
  const Matrix c = detail::tracked_rows(ss, tracked_outputs);
  const Matrix loop = ss.A - ss.B * k - Matrix::Identity(ss.nx(), ss.nx());
  return detail::prefilter_from_steady_state(c, loop, ss.B);
}

/// Reference prefilter for the dynamic law:
/// F = -(C (A - I - B D_c + B C_c (A_c - I)^{-1} B_c)^{-1} B)^{-1}.
inline Matrix dynamic_prefilter(const StateSpace& ss, const DynamicController& ctrl,
                                const std::vector<int>& tracked_outputs = {}) {
  ctrl.validate();
  if (ctrl.nx() != ss.nx() || ctrl.nu() != ss.nu()) {
    throw DimensionError("dynamic_prefilter: controller does not match plant");
  }
  const Matrix c = detail::tracked_rows(ss, tracked_outputs);
  // A controller state that is unobservable from u or unreachable from x
  // contributes nothing, even when A_c has a unit eigenvalue.
  Matrix controller_dc = Matrix::Zero(ctrl.nxc(), ctrl.nx());
  if (!ctrl.B_c.isZero(0.0) && !ctrl.C_c.isZero(0.0)) {
    try {
      controller_dc = solve_linear(ctrl.A_c - Matrix::Identity(ctrl.nxc(), ctrl.nxc()), ctrl.B_c);
    } catch (const SingularityError& e) {
      throw PrefilterError(std::string("dynamic_prefilter: ") + e.what());
    }
  }
  const Matrix loop = ss.A - Matrix::Identity(ss.nx(), ss.nx()) - ss.B * ctrl.D_c +
                      ss.B * ctrl.C_c * controller_dc;
  return detail::prefilter_from_steady_state(c, loop, ss.B);
}

/// Closed-loop matrix of plant and controller states:
/// [[A - B D_c, -B C_c], [B_c, A_c]].
inline Matrix augmented_matrix(const StateSpace& ss, const DynamicController& ctrl) {
  ctrl.validate();
  if (ctrl.nx() != ss.nx() || ctrl.nu() != ss.nu()) {
    throw DimensionError("augmented_matrix: controller does not match plant");
  }
  const auto nx = ss.nx();
  const auto nxc = ctrl.nxc();
  Matrix out(nx + nxc, nx + nxc);
  out.topLeftCorner(nx, nx) = ss.A - ss.B * ctrl.D_c;
  out.topRightCorner(nx, nxc) = -ss.B * ctrl.C_c;
  out.bottomLeftCorner(nxc, nx) = ctrl.B_c;
  out.bottomRightCorner(nxc, nxc) = ctrl.A_c;
  return out;
}

/// The closed loop as a state-space model driven by the prefiltered reference,
/// with the noise entering the plant states only.
inline StateSpace augmented_system(const StateSpace& ss, const DynamicController& ctrl) {
  const Matrix a = augmented_matrix(ss, ctrl);
  const auto nxc = ctrl.nxc();
  Matrix b = Matrix::Zero(a.rows(), ss.nu());
  b.topRows(ss.nx()) = ss.B;
  Matrix c = Matrix::Zero(ss.ny(), a.cols());
  c.leftCols(ss.nx()) = ss.C;
  return StateSpace{a,
                    b,
                    c,
                    Matrix::Zero(ss.ny(), ss.nu()),
                    ss.domain,
                    block_diagonal(ss.process_noise, Matrix::Zero(nxc, nxc)),
                    ss.measurement_noise};
}

/// A - B K for a static law.
inline Matrix closed_loop_matrix(const StateSpace& ss, const Matrix& k) {
  if (k.rows() != ss.nu() || k.cols() != ss.nx()) throw DimensionError("closed_loop_matrix: K shape");
  return ss.A - ss.B * k;
}

/// Zero-order-hold pair (e^{A Ts}, int_0^Ts e^{A t} dt B) via one block exponential.
inline std::pair<Matrix, Matrix> zoh_pair(const Matrix& a, const Matrix& b, double ts) {
  const auto n = a.rows();
  const auto m = b.cols();
  Matrix block = Matrix::Zero(n + m, n + m);
  block.topLeftCorner(n, n) = a * ts;
  block.topRightCorner(n, m) = b * ts;
  const Matrix e = matrix_exponential(block);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

/// Zero-order-hold discretization. C and D are unchanged; the process-noise
/// variance is scaled by Ts.
inline StateSpace c2d_zoh(const StateSpace& ss, double ts) {
  if (!(ts > 0.0) || !std::isfinite(ts)) throw ParameterError("c2d_zoh: sample time must be > 0");
  if (ss.domain.is_discrete()) throw ParameterError("c2d_zoh: model is already discrete");
  ss.validate();
  auto [ad, bd] = zoh_pair(ss.A, ss.B, ts);
  return StateSpace{std::move(ad), std::move(bd), ss.C, ss.D, TimeDomain::discrete(ts),
                    ts * ss.process_noise, ss.measurement_noise};
}

/// Zero-order-hold discretization of the controller's internal dynamics
/// (its input being the sampled plant state); C_c and D_c are unchanged.
inline DynamicController discretize_controller(const DynamicController& ctrl, double ts) {
  ctrl.validate();
  if (!(ts > 0.0)) throw ParameterError("discretize_controller: sample time must be > 0");
  auto [ad, bd] = zoh_pair(ctrl.A_c, ctrl.B_c, ts);
  return {std::move(ad), std::move(bd), ctrl.C_c, ctrl.D_c};
}

}  // namespace furuta
