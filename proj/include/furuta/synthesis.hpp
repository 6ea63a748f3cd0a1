#pragma once

// Dynamic state-feedback synthesis as a black-box minimization: a flat
// parameter vector is unpacked into (A_c, B_c, C_c, D_c) and scored by the
// spectrum of the closed-loop augmented matrix.

#include <string>

#include "furuta/bayesopt.hpp"
#include "furuta/control.hpp"

namespace furuta {

/// Sizes of a controller parameterization.
struct ControllerShape {
  Eigen::Index nx = 5;
  Eigen::Index nu = 1;
  Eigen::Index nxc = 1;

  Eigen::Index parameter_count() const { return nxc * nxc + nxc * nx + nu * nxc + nu * nx; }
};

namespace detail {

inline Matrix take_row_major(const Vector& theta, Eigen::Index& offset, Eigen::Index rows,
                             Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = theta[offset++];
  }
  return m;
}

inline void put_row_major(Vector& theta, Eigen::Index& offset, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) theta[offset++] = m(i, j);
  }
}

}  // namespace detail

/// Unpacks theta as A_c, B_c, C_c, D_c (each row-major, in that order).
inline DynamicController decode_controller(const Vector& theta, const ControllerShape& shape = {}) {
  if (theta.size() != shape.parameter_count()) {
    throw DimensionError("decode_controller: expected " + std::to_string(shape.parameter_count()) +
                         " parameters, got " + std::to_string(theta.size()));
  }
  Eigen::Index offset = 0;
  DynamicController c;
  c.A_c = detail::take_row_major(theta, offset, shape.nxc, shape.nxc);
  c.B_c = detail::take_row_major(theta, offset, shape.nxc, shape.nx);
  c.C_c = detail::take_row_major(theta, offset, shape.nu, shape.nxc);
  c.D_c = detail::take_row_major(theta, offset, shape.nu, shape.nx);
  return c;
}

inline Vector encode_controller(const DynamicController& c) {
  c.validate();
  const ControllerShape shape{c.nx(), c.nu(), c.nxc()};
  Vector theta(shape.parameter_count());
  Eigen::Index offset = 0;
  detail::put_row_major(theta, offset, c.A_c);
  detail::put_row_major(theta, offset, c.B_c);
  detail::put_row_major(theta, offset, c.C_c);
  detail::put_row_major(theta, offset, c.D_c);
  return theta;
}

enum class ObjectiveKind {
  /// Spectral abscissa (continuous) or spectral radius - 1 (discrete).
  kAbscissa,
  /// max_i |Re(lambda_i)|, the literal infinity norm of the real parts.
  kPaperInfNorm,
};

inline ObjectiveKind parse_objective_kind(const std::string& name) {
  if (name == "abscissa") return ObjectiveKind::kAbscissa;
  if (name == "paper-infnorm") return ObjectiveKind::kPaperInfNorm;
  throw ConfigError("unknown objective '" + name + "' (expected abscissa|paper-infnorm)");
}

inline std::string to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::kAbscissa ? "abscissa" : "paper-infnorm";
}

/// Closed-loop score of a parameter vector; lower is better and negative means
/// stable for the default kind. Eigenvalue failures map to kObjectivePenalty.
inline double synthesis_objective(const Vector& theta, const StateSpace& ss,
                                  ObjectiveKind kind = ObjectiveKind::kAbscissa,
                                  Eigen::Index nxc = 1) {
  const ControllerShape shape{ss.nx(), ss.nu(), nxc};
  const DynamicController ctrl = decode_controller(theta, shape);
  try {
    const auto values = eigenvalues(augmented_matrix(ss, ctrl));
    double score = 0.0;
    if (kind == ObjectiveKind::kPaperInfNorm) {
      for (const auto& v : values) score = std::max(score, std::abs(v.real()));
    } else if (ss.domain.is_discrete()) {
      score = spectral_radius(values) - 1.0;
    } else {
      score = spectral_abscissa(values);
    }
    return std::isfinite(score) ? score : kObjectivePenalty;
  } catch (const Error&) {
    return kObjectivePenalty;
  }
}

/// Default parameter box. Continuous plants: A_c in [-200, 0], B_c and C_c in
/// [-10, 10], D_c in [-100, 100]. Discrete plants: A_c in [-1, 1], B_c and C_c
/// in [-2, 2], D_c in [-10, 10].
inline SearchSpace default_search_space(const ControllerShape& shape, const TimeDomain& domain) {
  const bool discrete = domain.is_discrete();
  const double ac_lo = discrete ? -1.0 : -200.0;
  const double ac_hi = discrete ? 1.0 : 0.0;
  const double bc = discrete ? 2.0 : 10.0;
  const double cc = discrete ? 2.0 : 10.0;
  const double dc = discrete ? 10.0 : 100.0;
  SearchSpace space{Vector(shape.parameter_count()), Vector(shape.parameter_count())};
  Eigen::Index k = 0;
  auto fill = [&](Eigen::Index count, double lo, double hi) {
    for (Eigen::Index i = 0; i < count; ++i, ++k) {
      space.lower[k] = lo;
      space.upper[k] = hi;
    }
  };
  fill(shape.nxc * shape.nxc, ac_lo, ac_hi);
  fill(shape.nxc * shape.nx, -bc, bc);
  fill(shape.nu * shape.nxc, -cc, cc);
  fill(shape.nu * shape.nx, -dc, dc);
  return space;
}

/// Runs Bayesian optimization of synthesis_objective on `ss`.
inline BoResult synthesize_controller(const StateSpace& ss, const BoConfig& cfg,
                                      const SearchSpace& space,
                                      ObjectiveKind kind = ObjectiveKind::kAbscissa,
                                      Eigen::Index nxc = 1) {
  ss.validate();
  return bo_minimize([&](const Vector& theta) { return synthesis_objective(theta, ss, kind, nxc); },
                     space, cfg);
}

/// Reference controllers of the worked examples.
namespace reference {

/// Dynamic controller for the toy plant placing the loop poles at {0.5, 0.59, 0.8}.
inline DynamicController toy_dynamic_controller() {
  DynamicController c;
  c.A_c = Matrix::Constant(1, 1, 0.4);
  c.B_c = (Matrix(1, 2) << 1.0, -1.52).finished();
  c.C_c = Matrix::Constant(1, 1, -0.5);
  c.D_c = (Matrix(1, 2) << 0.3, 2.1).finished();
  return c;
}

/// Static gain for the toy plant placing the loop poles at {0.5, 0.8}.
inline Matrix toy_static_gain() { return (Matrix(1, 2) << 0.3, 4.0).finished(); }

/// Published optimized dynamic controller for the RIP model.
inline DynamicController rip_dynamic_controller() {
  DynamicController c;
  c.A_c = Matrix::Constant(1, 1, -100.0);
  c.B_c = Matrix::Zero(1, 5);
  c.C_c = Matrix::Constant(1, 1, -0.5);
  c.D_c = (Matrix(1, 5) << -20.96, -39.76, 72.74, 92.61, -0.58).finished();
  return c;
}

/// Published LQR gain for the RIP model (two decimals).
inline Matrix rip_lqr_gain() {
  return (Matrix(1, 5) << -0.31, -5.26, 70.74, 8.92, 0.17).finished();
}

/// LQR weights emphasizing pendulum angle, then arm and pendulum rates.
inline Matrix rip_state_weight() {
  return Vector((Vector(5) << 1.0, 10.0, 100.0, 10.0, 1.0).finished()).asDiagonal();
}
inline Matrix rip_input_weight() { return Matrix::Constant(1, 1, 10.0); }

}  // namespace reference

}  // namespace furuta
