#pragma once

// Discrete-time closed-loop simulation of the static and dynamic state-feedback
// laws with Gaussian process/measurement noise, sampled-data simulation of the
// nonlinear pendulum, reference generators and trajectory metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "furuta/control.hpp"
#include "furuta/plant.hpp"
#include "furuta/random.hpp"

namespace furuta {

/// Trajectories are abandoned once any state magnitude exceeds this.
inline constexpr double kDivergenceThreshold = 1e12;

struct ReferenceSignal {
  enum class Kind { kZero, kStep, kSine };

  Kind kind = Kind::kZero;
  double amplitude = 0.0;
  long onset_step = 0;       // step only
  double period_steps = 100;  // sine only
  double phase = 0.0;        // sine only, radians

  static ReferenceSignal zero() { return {}; }
  static ReferenceSignal step(double amplitude, long onset_step) {
    ReferenceSignal r;
    r.kind = Kind::kStep;
    r.amplitude = amplitude;
    r.onset_step = onset_step;
    return r;
  }
  static ReferenceSignal sine(double amplitude = 10.0, double period_steps = 100.0, double phase = 0.0) {
    ReferenceSignal r;
    r.kind = Kind::kSine;
    r.amplitude = amplitude;
    r.period_steps = period_steps;
    r.phase = phase;
    return r;
  }

  void validate() const {
    if (!std::isfinite(amplitude) || !std::isfinite(phase)) {
      throw ParameterError("ReferenceSignal: amplitude and phase must be finite");
    }
    if (kind == Kind::kSine && !(period_steps >= 2.0)) {
      throw ParameterError("ReferenceSignal: sine period must be at least 2 steps");
    }
  }

  double at(long k) const {
    switch (kind) {
      case Kind::kStep:
        return k >= onset_step ? amplitude : 0.0;
      case Kind::kSine:
        return amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) / period_steps + phase);
      case Kind::kZero:
      default:
        return 0.0;
    }
  }
};

inline std::string to_string(ReferenceSignal::Kind kind) {
  switch (kind) {
    case ReferenceSignal::Kind::kStep: return "step";
    case ReferenceSignal::Kind::kSine: return "sine";
    default: return "zero";
  }
}

struct SimOptions {
  /// Plant outputs that follow the reference; all outputs when empty. Their
  /// count must match the prefilter's column count.
  std::vector<int> tracked_outputs;
  std::optional<Vector> initial_state;
  std::optional<Vector> initial_controller_state;
  /// Draw process and measurement noise from the model's covariances.
  bool noise = true;
};

/// Step-indexed trajectories. Entry k of every series belongs to step k;
/// controller_states holds empty vectors for a static law.
struct SimResult {
  std::vector<Vector> states;
  std::vector<Vector> controller_states;
  std::vector<Vector> outputs;
  std::vector<Vector> controls;
  std::vector<Vector> references;
  std::vector<int> tracked_outputs;
  std::uint64_t seed = 0;
  bool diverged = false;

  std::size_t steps() const { return states.size(); }
};

namespace detail {

inline std::vector<int> resolve_tracked(const std::vector<int>& tracked, Eigen::Index ny,
                                        Eigen::Index n_ref) {
  std::vector<int> out = tracked;
  if (out.empty()) {
    for (int i = 0; i < ny; ++i) out.push_back(i);
  }
  for (int i : out) {
    if (i < 0 || i >= ny) throw DimensionError("simulate: tracked output out of range");
  }
  if (static_cast<Eigen::Index>(out.size()) != n_ref) {
    throw DimensionError("simulate: prefilter columns must match the tracked outputs");
  }
  return out;
}

inline Vector initial_or_zero(const std::optional<Vector>& v, Eigen::Index n, const char* what) {
  if (!v) return Vector::Zero(n);
  if (v->size() != n) throw DimensionError(std::string("simulate: ") + what + " has wrong size");
  return *v;
}

inline bool diverging(const Vector& x) {
  return !x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceThreshold;
}

/// Shared discrete-time loop. `law(x, xc, rbar)` returns {u, next xc}.
template <typename Law>
SimResult simulate_loop(const StateSpace& ss, const Matrix& f, const ReferenceSignal& ref, long horizon,
                        std::uint64_t seed, const SimOptions& options, Eigen::Index nxc, Law&& law) {
  if (!ss.domain.is_discrete()) throw ParameterError("simulate: plant model must be discrete-time");
  ss.validate();
  ref.validate();
  if (horizon < 1) throw ParameterError("simulate: horizon must be >= 1 step");
  if (f.rows() != ss.nu()) throw DimensionError("simulate: prefilter must have one row per input");

  SimResult res;
  res.seed = seed;
  res.tracked_outputs = resolve_tracked(options.tracked_outputs, ss.ny(), f.cols());

  const Matrix v_root = psd_sqrt(ss.process_noise);
  const Matrix w_root = psd_sqrt(ss.measurement_noise);
  Rng rng(seed);
  auto draw = [&](const Matrix& root) {
    Vector z(root.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return Vector(root * z);
  };

  Vector x = initial_or_zero(options.initial_state, ss.nx(), "initial_state");
  Vector xc = initial_or_zero(options.initial_controller_state, nxc, "initial_controller_state");
  const auto n = static_cast<std::size_t>(horizon);
  for (auto* series : {&res.states, &res.controller_states, &res.outputs, &res.controls, &res.references}) {
    series->reserve(n);
  }

  for (long k = 0; k < horizon; ++k) {
    // Per step: measurement noise first, then process noise.
    const Vector rbar = Vector::Constant(f.cols(), ref.at(k));
    auto [u, xc_next] = law(x, xc, rbar);
    Vector y = ss.C * x + ss.D * u;
    if (options.noise) y += draw(w_root);
    res.states.push_back(x);
    res.controller_states.push_back(xc);
    res.outputs.push_back(y);
    res.controls.push_back(u);
    res.references.push_back(rbar);

    Vector x_next = ss.A * x + ss.B * u;
    if (options.noise) x_next += draw(v_root);
    if (diverging(x_next)) {
      res.diverged = true;
      break;
    }
    x = std::move(x_next);
    xc = std::move(xc_next);
  }
  return res;
}

}  // namespace detail

/// Closed loop of a discrete plant with the dynamic law
/// x_c[k+1] = A_c x_c[k] + B_c x[k], u[k] = F r[k] - C_c x_c[k] - D_c x[k].
inline SimResult simulate_dynamic(const StateSpace& ss_d, const DynamicController& ctrl, const Matrix& f,
                                  const ReferenceSignal& ref, long horizon, std::uint64_t seed,
                                  const SimOptions& options = {}) {
  ctrl.validate();
  if (ctrl.nx() != ss_d.nx() || ctrl.nu() != ss_d.nu()) {
    throw DimensionError("simulate_dynamic: controller does not match plant");
  }
  return detail::simulate_loop(
      ss_d, f, ref, horizon, seed, options, ctrl.nxc(),
      [&](const Vector& x, const Vector& xc, const Vector& rbar) {
        Vector u = f * rbar - ctrl.C_c * xc - ctrl.D_c * x;
        Vector next = ctrl.A_c * xc + ctrl.B_c * x;
        return std::pair{std::move(u), std::move(next)};
      });
}

/// Closed loop of a discrete plant with the static law u[k] = F r[k] - K x[k].
inline SimResult simulate_static(const StateSpace& ss_d, const Matrix& k, const Matrix& f,
                                 const ReferenceSignal& ref, long horizon, std::uint64_t seed,
                                 const SimOptions& options = {}) {
  if (k.rows() != ss_d.nu() || k.cols() != ss_d.nx()) throw DimensionError("simulate_static: K shape");
  return detail::simulate_loop(ss_d, f, ref, horizon, seed, options, 0,
                               [&](const Vector& x, const Vector& xc, const Vector& rbar) {
                                 Vector u = f * rbar - k * x;
                                 return std::pair{std::move(u), Vector(xc)};
                               });
}

struct NonlinearSimOptions {
  /// Outputs are rows of this matrix applied to the state; the standard
  /// arm/pendulum selection when empty.
  Matrix output_matrix;
  std::vector<int> tracked_outputs = {kArmAngle};
  std::optional<PendulumState> initial_state;
  /// RK4 substeps per controller period.
  int substeps = 10;
  /// Covariance of noise added to the state once per period (zero by default).
  Matrix process_noise;
};

/// Sampled-data loop of the nonlinear pendulum: RK4 between controller updates,
/// voltage held constant over each period, controller reading the true state.
/// `ctrl` is continuous-time and is discretized by zero-order hold at `ts`.
inline SimResult simulate_nonlinear(const PendulumParams& p, const DynamicController& ctrl, const Matrix& f,
                                    const ReferenceSignal& ref, double ts, long horizon, std::uint64_t seed,
                                    const NonlinearSimOptions& options = {}) {
  p.validate();
  ref.validate();
  if (!(ts > 0.0)) throw ParameterError("simulate_nonlinear: sample time must be > 0");
  if (horizon < 1) throw ParameterError("simulate_nonlinear: horizon must be >= 1 step");
  if (options.substeps < 1) throw ParameterError("simulate_nonlinear: substeps must be >= 1");
  if (ctrl.nx() != kPendulumStates || ctrl.nu() != 1) {
    throw DimensionError("simulate_nonlinear: controller must map 5 states to 1 input");
  }
  if (f.rows() != 1) throw DimensionError("simulate_nonlinear: prefilter must have one row");
  const DynamicController cd = discretize_controller(ctrl, ts);
  const Matrix c = options.output_matrix.size() > 0 ? options.output_matrix : rip_output_matrix();
  if (c.cols() != kPendulumStates) throw DimensionError("simulate_nonlinear: output matrix width");

  SimResult res;
  res.seed = seed;
  res.tracked_outputs = detail::resolve_tracked(options.tracked_outputs, c.rows(), f.cols());

  Matrix v_root;
  if (options.process_noise.size() > 0) {
    if (options.process_noise.rows() != kPendulumStates || options.process_noise.cols() != kPendulumStates) {
      throw DimensionError("simulate_nonlinear: process noise must be 5x5");
    }
    v_root = psd_sqrt(options.process_noise);
  }
  Rng rng(seed);

  PendulumState s = options.initial_state.value_or(PendulumState::Zero());
  Vector xc = Vector::Zero(cd.nxc());
  const double h = ts / options.substeps;
  for (long k = 0; k < horizon; ++k) {
    const Vector x = s;
    const Vector rbar = Vector::Constant(f.cols(), ref.at(k));
    const Vector u = f * rbar - cd.C_c * xc - cd.D_c * x;
    res.states.push_back(x);
    res.controller_states.push_back(xc);
    res.outputs.push_back(c * x);
    res.controls.push_back(u);
    res.references.push_back(rbar);

    const double voltage = u[0];
    for (int i = 0; i < options.substeps; ++i) {
      const PendulumState k1 = nonlinear_dynamics(p, s, voltage);
      const PendulumState k2 = nonlinear_dynamics(p, s + 0.5 * h * k1, voltage);
      const PendulumState k3 = nonlinear_dynamics(p, s + 0.5 * h * k2, voltage);
      const PendulumState k4 = nonlinear_dynamics(p, s + h * k3, voltage);
      s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (v_root.size() > 0) {
      PendulumState z;
      for (int i = 0; i < kPendulumStates; ++i) z[i] = rng.normal();
      s += v_root * z;
    }
    xc = cd.A_c * xc + cd.B_c * x;
    if (detail::diverging(s)) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

struct Metrics {
  double peak_control = 0.0;
  /// First step from which the tracking error stays inside the band; equals
  /// the trajectory length when it never settles.
  long settling_step = 0;
  bool settled = true;
  /// RMS tracking error from settling_step on (whole run when unsettled).
  double tracking_rmse = 0.0;
  /// Mean absolute tracking error over the final 10% of the run.
  double steady_state_error = 0.0;
  double band = 0.0;
};

/// Tracking error y[k] - r[k] restricted to the tracked outputs.
inline Vector tracking_error(const SimResult& res, std::size_t k) {
  Vector e(static_cast<Eigen::Index>(res.tracked_outputs.size()));
  for (std::size_t i = 0; i < res.tracked_outputs.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    e[idx] = res.outputs[k][res.tracked_outputs[i]] - res.references[k][idx];
  }
  return e;
}

/// Default settling band: 2% of the largest reference magnitude, or 1e-3 for
/// an identically zero reference.
inline double default_settling_band(const SimResult& res) {
  double peak = 0.0;
  for (const auto& r : res.references) {
    if (r.size() > 0) peak = std::max(peak, r.cwiseAbs().maxCoeff());
  }
  return peak > 0.0 ? 0.02 * peak : 1e-3;
}

inline Metrics compute_metrics(const SimResult& res, std::optional<double> band = std::nullopt) {
  const std::size_t n = res.steps();
  if (n == 0) throw DimensionError("compute_metrics: empty trajectory");
  Metrics m;
  m.band = band.value_or(default_settling_band(res));

  for (const auto& u : res.controls) {
    if (u.size() > 0) m.peak_control = std::max(m.peak_control, u.cwiseAbs().maxCoeff());
  }

  std::vector<Vector> errors(n);
  for (std::size_t k = 0; k < n; ++k) errors[k] = tracking_error(res, k);
  auto err_inf = [](const Vector& e) { return e.size() > 0 ? e.cwiseAbs().maxCoeff() : 0.0; };

  std::size_t settle = n;
  while (settle > 0 && err_inf(errors[settle - 1]) <= m.band) --settle;
  m.settled = settle < n;
  m.settling_step = static_cast<long>(m.settled ? settle : n);

  const std::size_t window_begin = m.settled ? settle : 0;
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t k = window_begin; k < n; ++k) {
    sq += errors[k].squaredNorm();
    count += static_cast<std::size_t>(errors[k].size());
  }
  m.tracking_rmse = count > 0 ? std::sqrt(sq / static_cast<double>(count)) : 0.0;

  const std::size_t tail = std::max<std::size_t>(1, (n + 9) / 10);
  double abs_sum = 0.0;
  count = 0;
  for (std::size_t k = n - tail; k < n; ++k) {
    abs_sum += errors[k].cwiseAbs().sum();
    count += static_cast<std::size_t>(errors[k].size());
  }
  m.steady_state_error = count > 0 ? abs_sum / static_cast<double>(count) : 0.0;
  return m;
}

namespace detail {

inline void append_columns(std::vector<std::string>& header, const std::string& prefix, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) header.push_back(prefix + std::to_string(i));
}

inline std::size_t width_of(const std::vector<Vector>& series) {
  return series.empty() ? 0 : static_cast<std::size_t>(series.front().size());
}

inline void write_trace(std::ostream& os, const SimResult& res, char sep, const std::string& comment) {
  std::vector<std::string> header{"step"};
  append_columns(header, "ref", static_cast<Eigen::Index>(width_of(res.references)));
  append_columns(header, "y", static_cast<Eigen::Index>(width_of(res.outputs)));
  append_columns(header, "u", static_cast<Eigen::Index>(width_of(res.controls)));
  append_columns(header, "x", static_cast<Eigen::Index>(width_of(res.states)));
  append_columns(header, "xc", static_cast<Eigen::Index>(width_of(res.controller_states)));
  os << comment;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? std::string(1, sep) : "") << header[i];
  os << '\n';

  std::ostringstream row;
  row << std::setprecision(17);
  for (std::size_t k = 0; k < res.steps(); ++k) {
    row.str("");
    row << k;
    for (const auto* series : {&res.references, &res.outputs, &res.controls, &res.states,
                               &res.controller_states}) {
      for (double v : (*series)[k]) row << sep << v;
    }
    os << row.str() << '\n';
  }
}

}  // namespace detail

/// CSV trace: header `step,ref*,y*,u*,x*,xc*`, one row per step, 17 significant digits.
inline void write_trace_csv(std::ostream& os, const SimResult& res) { detail::write_trace(os, res, ',', ""); }

/// Whitespace-separated mirror of the trace for gnuplot; header is a comment.
inline void write_trace_dat(std::ostream& os, const SimResult& res) { detail::write_trace(os, res, ' ', "# "); }

}  // namespace furuta
