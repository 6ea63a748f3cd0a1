#pragma once

// Rotary inverted (Furuta) pendulum driven by a geared DC motor.
//
// State ordering everywhere: [arm angle, arm rate, pendulum angle, pendulum
// rate, armature current]. Pendulum angle 0 is the upright position.

#include <cmath>
#include <optional>
#include <string>

#include "furuta/numerics.hpp"

namespace furuta {

inline constexpr int kArmAngle = 0;
inline constexpr int kArmRate = 1;
inline constexpr int kPendulumAngle = 2;
inline constexpr int kPendulumRate = 3;
inline constexpr int kCurrent = 4;
inline constexpr int kPendulumStates = 5;

using PendulumState = Eigen::Matrix<double, kPendulumStates, 1>;

/// Physical constants of the pendulum, arm, counterweight and motor (SI units).
struct PendulumParams {
  double pendulum_mass = 0.1;            // m_p [kg]
  double counterweight_mass = 0.01;      // m_c [kg]
  double pendulum_inertia = 5.1e-4;      // I_p [kg m^2]
  double arm_inertia = 3.1e-3;           // I_a [kg m^2]
  double arm_radius = 0.13;              // r [m]
  double pendulum_com = 0.125;           // l_p [m]
  double counterweight_height = 0.055;   // h [m]
  double arm_friction = 1e-4;            // C_0
  double pendulum_friction = 1e-4;       // C_1
  double armature_resistance = 8.0;      // R_a [Ohm]
  double armature_inductance = 10e-3;    // L_a [H]
  double motor_inertia = 1.9e-6;         // I_m [kg m^2]
  double mutual_inductance = 0.0214;     // M_f [N m / A]
  double gear_ratio = 59927.0;           // K_g
  double external_gear_ratio = 16.0;     // K_eg
  double gravity = 9.806;                // g [m/s^2]

  /// The laboratory prototype values (preset "table1").
  static PendulumParams table1() { return {}; }

  /// Arm-axis inertia with the pendulum lumped at the tip: I_a + r^2 (m_p + m_c).
  double arm_axis_inertia() const {
    return arm_inertia + arm_radius * arm_radius * (pendulum_mass + counterweight_mass);
  }

  /// Pendulum inertia about its pivot: I_p + m_p l_p^2.
  double pendulum_axis_inertia() const {
    return pendulum_inertia + pendulum_mass * pendulum_com * pendulum_com;
  }

  /// Arm-axis inertia seen by the motor, including the reflected rotor inertia K_g^2 I_m.
  double driven_arm_inertia() const {
    return arm_axis_inertia() + gear_ratio * gear_ratio * motor_inertia;
  }

  /// m_p r l_p, the arm/pendulum coupling coefficient.
  double coupling() const { return pendulum_mass * arm_radius * pendulum_com; }

  /// Throws ParameterError when a physical invariant is violated.
  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(std::isfinite(v) && v > 0.0)) {
        throw ParameterError(std::string("PendulumParams: ") + name + " must be > 0");
      }
    };
    auto non_negative = [](double v, const char* name) {
      if (!(std::isfinite(v) && v >= 0.0)) {
        throw ParameterError(std::string("PendulumParams: ") + name + " must be >= 0");
      }
    };
    positive(pendulum_mass, "pendulum_mass");
    positive(counterweight_mass, "counterweight_mass");
    positive(pendulum_inertia, "pendulum_inertia");
    positive(arm_inertia, "arm_inertia");
    positive(arm_radius, "arm_radius");
    positive(pendulum_com, "pendulum_com");
    positive(counterweight_height, "counterweight_height");
    non_negative(arm_friction, "arm_friction");
    non_negative(pendulum_friction, "pendulum_friction");
    positive(armature_resistance, "armature_resistance");
    positive(armature_inductance, "armature_inductance");
    positive(motor_inertia, "motor_inertia");
    non_negative(mutual_inductance, "mutual_inductance");
    non_negative(gear_ratio, "gear_ratio");
    non_negative(external_gear_ratio, "external_gear_ratio");
    positive(gravity, "gravity");
    const double det = arm_axis_inertia() * pendulum_axis_inertia() - coupling() * coupling();
    if (!(det > 0.0)) {
      throw ParameterError("PendulumParams: inertia matrix is not positive definite");
    }
  }
};

/// Continuous time, or discrete time with a sample period in seconds.
struct TimeDomain {
  std::optional<double> sample_time;

  static TimeDomain continuous() { return {}; }
  static TimeDomain discrete(double ts) { return {ts}; }
  bool is_discrete() const { return sample_time.has_value(); }
};

/// LTI model x' = A x + B u + v, y = C x + D u + w with noise variances.
struct StateSpace {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix D;
  TimeDomain domain;
  Matrix process_noise;      // P_v, nx x nx
  Matrix measurement_noise;  // P_w, ny x ny

  Eigen::Index nx() const { return A.rows(); }
  Eigen::Index nu() const { return B.cols(); }
  Eigen::Index ny() const { return C.rows(); }

  void validate() const {
    require_square(A, "StateSpace.A");
    const auto n = nx();
    if (B.rows() != n || B.cols() < 1) throw DimensionError("StateSpace: B must have nx rows");
    if (C.cols() != n || C.rows() < 1) throw DimensionError("StateSpace: C must have nx columns");
    if (D.rows() != ny() || D.cols() != nu()) throw DimensionError("StateSpace: D must be ny x nu");
    if (process_noise.rows() != n || process_noise.cols() != n) {
      throw DimensionError("StateSpace: process noise must be nx x nx");
    }
    if (measurement_noise.rows() != ny() || measurement_noise.cols() != ny()) {
      throw DimensionError("StateSpace: measurement noise must be ny x ny");
    }
    for (const Matrix* m : {&A, &B, &C, &D, &process_noise, &measurement_noise}) {
      require_finite(*m, "StateSpace");
    }
    if (!is_symmetric_psd(process_noise) || !is_symmetric_psd(measurement_noise)) {
      throw ParameterError("StateSpace: noise variances must be symmetric PSD");
    }
    if (domain.is_discrete() && !(*domain.sample_time > 0.0)) {
      throw ParameterError("StateSpace: sample time must be positive");
    }
  }
};

/// Default RIP noise variances; small enough not to mask the dynamics.
inline constexpr double kDefaultRipNoiseVariance = 1e-6;

/// Inertia matrix of the motor-coupled model at pendulum angle `theta1`.
inline Eigen::Matrix2d driven_inertia_matrix(const PendulumParams& p, double theta1) {
  const double s = std::sin(theta1);
  const double c = std::cos(theta1);
  const double mlp2 = p.pendulum_mass * p.pendulum_com * p.pendulum_com;
  Eigen::Matrix2d m;
  m << p.driven_arm_inertia() + mlp2 * s * s, -p.coupling() * c,
       -p.coupling() * c, p.pendulum_axis_inertia();
  return m;
}

/// Time derivative of the full nonlinear state under armature voltage `voltage`.
///
/// Mechanics: M1bar(th1) qdd = Tbar - M2bar(th1, qd) qd - M3(th1) with the
/// rotor inertia reflected into the arm axis and load torque M_f K_g i.
/// Electrics: di/dt = V/L_a - (R_a/L_a) i - M_f/(L_a K_g) th0'.
inline PendulumState nonlinear_dynamics(const PendulumParams& p, const PendulumState& s,
                                        double voltage) {
  const double w0 = s[kArmRate];
  const double th1 = s[kPendulumAngle];
  const double w1 = s[kPendulumRate];
  const double i = s[kCurrent];
  const double sin1 = std::sin(th1);
  const double sin2 = std::sin(2.0 * th1);
  const double mlp = p.pendulum_mass * p.pendulum_com;

  const Eigen::Matrix2d m1 = driven_inertia_matrix(p, th1);
  Eigen::Matrix2d m2;
  m2 << mlp * w1 * sin2 + p.arm_friction, p.coupling() * w1 * sin1,
        -0.5 * mlp * w0 * sin2, p.pendulum_friction;
  const Eigen::Vector2d m3(0.0, -mlp * p.gravity * sin1);
  const Eigen::Vector2d torque(p.mutual_inductance * p.gear_ratio * i, 0.0);

  const double det = m1.determinant();
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
    throw SingularityError("nonlinear_dynamics: inertia matrix is singular");
  }
  const Eigen::Vector2d qdd = m1.inverse() * (torque - m2 * Eigen::Vector2d(w0, w1) - m3);

  const double back_emf = p.gear_ratio > 0.0 ? p.mutual_inductance / (p.armature_inductance * p.gear_ratio)
                                             : 0.0;
  PendulumState out;
  out[kArmAngle] = w0;
  out[kArmRate] = qdd[0];
  out[kPendulumAngle] = w1;
  out[kPendulumRate] = qdd[1];
  out[kCurrent] = voltage / p.armature_inductance -
                  (p.armature_resistance / p.armature_inductance) * i - back_emf * w0;
  return out;
}

/// Purely mechanical Euler-Lagrange model M1 qdd + M2 qd + M3 = [torque, 0],
/// without the motor. Returns [th0'', th1''].
inline Eigen::Vector2d mechanical_dynamics(const PendulumParams& p, const Eigen::Vector2d& q,
                                           const Eigen::Vector2d& qd, double arm_torque) {
  const double th1 = q[1];
  const double sin1 = std::sin(th1);
  const double sin2 = std::sin(2.0 * th1);
  const double cos1 = std::cos(th1);
  const double mlp2 = p.pendulum_mass * p.pendulum_com * p.pendulum_com;
  Eigen::Matrix2d m1;
  m1 << p.arm_axis_inertia() + mlp2 * sin1 * sin1, -p.coupling() * cos1,
        -p.coupling() * cos1, p.pendulum_axis_inertia();
  Eigen::Matrix2d m2;
  m2 << mlp2 * qd[1] * sin2 + p.arm_friction, p.coupling() * qd[1] * sin1,
        -0.5 * mlp2 * qd[0] * sin2, p.pendulum_friction;
  const Eigen::Vector2d m3(0.0, -p.pendulum_mass * p.gravity * p.pendulum_com * sin1);
  return m1.inverse() * (Eigen::Vector2d(arm_torque, 0.0) - m2 * qd - m3);
}

/// Mechanical energy E_k + E_p (J). Electrical and rotor energy are excluded.
inline double total_energy(const PendulumParams& p, const PendulumState& s) {
  const double w0 = s[kArmRate];
  const double th1 = s[kPendulumAngle];
  const double w1 = s[kPendulumRate];
  const double sin1 = std::sin(th1);
  const double cos1 = std::cos(th1);
  const double kinetic = 0.5 * p.arm_axis_inertia() * w0 * w0 +
                         0.5 * p.pendulum_axis_inertia() * w1 * w1 +
                         0.5 * p.pendulum_mass * p.pendulum_com * p.pendulum_com * w0 * w0 * sin1 * sin1 -
                         p.coupling() * w0 * w1 * cos1;
  const double potential = p.pendulum_mass * p.gravity * p.pendulum_com * cos1 +
                           p.counterweight_mass * p.gravity * p.counterweight_height;
  return kinetic + potential;
}

/// Output map measuring arm angle, pendulum angle and current.
inline Matrix rip_output_matrix() {
  Matrix c = Matrix::Zero(3, kPendulumStates);
  c(0, kArmAngle) = 1.0;
  c(1, kPendulumAngle) = 1.0;
  c(2, kCurrent) = 1.0;
  return c;
}

/// Linearization of nonlinear_dynamics about the upright equilibrium.
///
/// With J0 the driven arm inertia, J1 the pendulum inertia, c = m_p r l_p and
/// alpha = 1 / (J0 J1 - c^2):
///
///   row 2 = alpha [0, -J1 C0, c m_p g l_p, -c C1, M_f K_g J1]
///   row 4 = alpha [0, -c C0, J0 m_p g l_p, -J0 C1, M_f K_g c]
///   row 5 = [0, -M_f/(L_a K_g), 0, 0, -R_a/L_a]
///
/// This is the exact Jacobian of nonlinear_dynamics, so it agrees with a
/// finite-difference linearization to rounding error.
inline StateSpace linearize(const PendulumParams& p,
                            double process_noise = kDefaultRipNoiseVariance,
                            double measurement_noise = kDefaultRipNoiseVariance) {
  p.validate();
  const double j0 = p.driven_arm_inertia();
  const double j1 = p.pendulum_axis_inertia();
  const double c = p.coupling();
  const double denom = j0 * j1 - c * c;
  if (!(denom > 0.0)) throw ParameterError("linearize: inertia determinant must be positive");
  const double alpha = 1.0 / denom;
  const double gravity_torque = p.pendulum_mass * p.gravity * p.pendulum_com;
  const double motor_torque = p.mutual_inductance * p.gear_ratio;

  Matrix a = Matrix::Zero(5, 5);
  a(kArmAngle, kArmRate) = 1.0;
  a(kArmRate, kArmRate) = -alpha * j1 * p.arm_friction;
  a(kArmRate, kPendulumAngle) = alpha * c * gravity_torque;
  a(kArmRate, kPendulumRate) = -alpha * c * p.pendulum_friction;
  a(kArmRate, kCurrent) = alpha * motor_torque * j1;
  a(kPendulumAngle, kPendulumRate) = 1.0;
  a(kPendulumRate, kArmRate) = -alpha * c * p.arm_friction;
  a(kPendulumRate, kPendulumAngle) = alpha * j0 * gravity_torque;
  a(kPendulumRate, kPendulumRate) = -alpha * j0 * p.pendulum_friction;
  a(kPendulumRate, kCurrent) = alpha * motor_torque * c;
  a(kCurrent, kArmRate) =
      p.gear_ratio > 0.0 ? -p.mutual_inductance / (p.armature_inductance * p.gear_ratio) : 0.0;
  a(kCurrent, kCurrent) = -p.armature_resistance / p.armature_inductance;

  Matrix b = Matrix::Zero(5, 1);
  b(kCurrent, 0) = 1.0 / p.armature_inductance;

  return StateSpace{a,
                    b,
                    rip_output_matrix(),
                    Matrix::Zero(3, 1),
                    TimeDomain::continuous(),
                    process_noise * Matrix::Identity(5, 5),
                    measurement_noise * Matrix::Identity(3, 3)};
}

/// The published numeric RIP model (two-decimal entries), used to reproduce
/// the reported LQR and optimized controllers.
inline StateSpace canonical_rip_model(double process_noise = kDefaultRipNoiseVariance,
                                      double measurement_noise = kDefaultRipNoiseVariance) {
  Matrix a(5, 5);
  a << 0, 1, 0, 0, 0,
       0, -0.31, 2.99, -0.02, 81.47,
       0, 0, 0, 1, 0,
       0, -0.02, 61.49, -0.5, 63.88,
       0, -261.94, 0, 0, -800;
  Matrix b = Matrix::Zero(5, 1);
  b(4, 0) = 100.0;
  return StateSpace{a,
                    b,
                    rip_output_matrix(),
                    Matrix::Zero(3, 1),
                    TimeDomain::continuous(),
                    process_noise * Matrix::Identity(5, 5),
                    measurement_noise * Matrix::Identity(3, 3)};
}

/// Discrete-time SISO toy plant (unit sample time, unit-variance noises).
inline StateSpace toy_plant() {
  Matrix a(2, 2);
  a << 0.5, 0.0,
       0.7, 1.2;
  Matrix b(2, 1);
  b << 0.0, 0.1;
  Matrix c(1, 2);
  c << 1.0, 1.0;
  return StateSpace{a,
                    b,
                    c,
                    Matrix::Zero(1, 1),
                    TimeDomain::discrete(1.0),
                    Matrix::Identity(2, 2),
                    Matrix::Identity(1, 1)};
}

/// True when the input-coupling map f2 cannot produce an arbitrary
/// acceleration, i.e. its numerical rank is below the configuration dimension.
inline bool is_underactuated(const Matrix& f2, Eigen::Index q_dim) {
  if (f2.rows() != q_dim) {
    throw DimensionError("is_underactuated: f2 must have q_dim rows");
  }
  if (f2.size() == 0) return q_dim > 0;
  require_finite(f2, "is_underactuated");
  Eigen::JacobiSVD<Matrix> svd(f2);
  const Vector sv = svd.singularValues();
  const double largest = sv.size() > 0 ? sv.maxCoeff() : 0.0;
  Eigen::Index rank = 0;
  if (largest > 0.0) {
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
      if (sv[k] > 1e-10 * largest) ++rank;
    }
  }
  return rank < q_dim;
}

/// Input coupling of the RIP mechanics: the motor torque acts on the arm only.
inline Matrix rip_torque_coupling() {
  Matrix t(2, 1);
  t << 1.0, 0.0;
  return t;
}

}  // namespace furuta
