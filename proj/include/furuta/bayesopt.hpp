#pragma once

// Bayesian optimization over a box with a Gaussian-process surrogate and the
// Expected Improvement acquisition. The loop minimizes: internally it maximizes
// the negated standardized objective, so EI keeps its usual maximization form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "furuta/gp.hpp"
#include "furuta/random.hpp"

namespace furuta {

/// Value substituted for failed or non-finite objective evaluations.
inline constexpr double kObjectivePenalty = 1e6;

inline double standard_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Expected Improvement of a maximization surrogate over the incumbent f_best:
/// (mu - f_best - xi) Phi(z) + sigma phi(z), z = (mu - f_best - xi) / sigma.
inline double expected_improvement(double mu, double sigma, double f_best, double xi) {
  const double gain = mu - f_best - xi;
  if (!(sigma > 0.0)) return std::max(0.0, gain);
  const double z = gain / sigma;
  return std::max(0.0, gain * standard_normal_cdf(z) + sigma * standard_normal_pdf(z));
}

struct SearchSpace {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }

  void validate() const {
    if (lower.size() != upper.size() || lower.size() < 1) {
      throw DimensionError("SearchSpace: bounds must be non-empty and of equal length");
    }
    if (!lower.allFinite() || !upper.allFinite() || !(lower.array() < upper.array()).all()) {
      throw ParameterError("SearchSpace: every lower bound must be finite and below its upper bound");
    }
  }

  Vector to_unit(const Vector& x) const {
    return ((x - lower).array() / (upper - lower).array()).matrix();
  }
  Vector from_unit(const Vector& u) const {
    return (lower.array() + u.array() * (upper - lower).array()).matrix();
  }
};

/// Monotone transform applied to objective values before they reach the surrogate.
enum class OutputWarp {
  kNone,
  /// sign(y) log(1 + |y|): compresses penalties and large values so the GP
  /// resolves differences near zero. Order-preserving, so minimizers agree.
  kSignedLog,
};

inline double apply_warp(OutputWarp warp, double y) {
  return warp == OutputWarp::kSignedLog ? std::copysign(std::log1p(std::abs(y)), y) : y;
}

struct BoConfig {
  int n_init = 10;
  int n_max = 150;
  double xi = 0.01;
  int acquisition_restarts = 10;
  std::uint64_t rng_seed = 1;

  /// Uniform probes per input dimension when maximizing the acquisition.
  int probes_per_dim = 2000;
  /// Surrogate hyperparameters (inputs are scaled to the unit cube).
  KernelConfig kernel = {};
  double length_scale = 0.2;
  /// Standardized outputs above this are clipped so penalties do not swamp the fit.
  double clip_standardized = 10.0;
  /// Transform of objective values fed to the surrogate (history stays raw).
  OutputWarp warp = OutputWarp::kSignedLog;
  /// Upper bound on pattern-search iterations per acquisition start.
  int max_refine_sweeps = 100;
  /// Worker threads for acquisition probing; 0 means hardware concurrency.
  int threads = 0;

  void validate() const {
    if (n_init < 2) throw ParameterError("BoConfig: n_init must be >= 2");
    if (n_max <= n_init) throw ParameterError("BoConfig: n_max must exceed n_init");
    if (!(xi >= 0.0)) throw ParameterError("BoConfig: xi must be >= 0");
    if (acquisition_restarts < 0) throw ParameterError("BoConfig: restarts must be >= 0");
    if (probes_per_dim < 1) throw ParameterError("BoConfig: probes_per_dim must be >= 1");
    if (!(length_scale > 0.0)) throw ParameterError("BoConfig: length_scale must be > 0");
    if (max_refine_sweeps < 1) throw ParameterError("BoConfig: max_refine_sweeps must be >= 1");
  }

  KernelConfig kernel_for(Eigen::Index dim) const {
    KernelConfig k = kernel;
    k.length_scales = Vector::Constant(dim, length_scale);
    return k;
  }
};

struct Evaluation {
  Vector point;  // original coordinates
  double value = 0.0;
};

struct BoResult {
  Vector best_point;
  double best_value = 0.0;
  std::vector<Evaluation> history;
};

/// Thread count from FURUTA_SYNTH_THREADS, else hardware concurrency (>= 1).
inline int default_thread_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FURUTA_SYNTH_THREADS")) {
    const int capped = std::atoi(env);
    if (capped > 0) n = n > 0 ? std::min(n, capped) : capped;
  }
  return std::max(1, n);
}

namespace detail {

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index writes
/// only its own output slot, so the result does not depend on scheduling.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t used = std::min(workers, n);
  pool.reserve(used);
  for (std::size_t w = 0; w < used; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += used) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// Stratified initial design: one sample per stratum in each dimension, with
/// strata permuted independently per dimension. Points are in the unit cube.
inline std::vector<Vector> latin_hypercube(int n, Eigen::Index dim, Rng& rng) {
  std::vector<Vector> points(static_cast<std::size_t>(n), Vector(dim));
  std::vector<int> strata(static_cast<std::size_t>(n));
  for (Eigen::Index d = 0; d < dim; ++d) {
    for (int i = 0; i < n; ++i) strata[static_cast<std::size_t>(i)] = i;
    rng.shuffle(strata);
    for (int i = 0; i < n; ++i) {
      points[static_cast<std::size_t>(i)][d] = (strata[static_cast<std::size_t>(i)] + rng.uniform()) / n;
    }
  }
  return points;
}

/// EI of the surrogate at a unit-cube point, for minimization of the objective.
inline double acquisition_value(const GpModel& model, const Vector& unit_x, double xi) {
  const auto p = model.predict_standardized(unit_x);
  return expected_improvement(-p.mean, p.stddev, -model.best_standardized(), xi);
}

/// acquisition_value for every column of `points`.
inline Vector acquisition_values(const GpModel& model, const Matrix& points, double xi) {
  Vector means;
  Vector stddevs;
  model.predict_standardized_batch(points, means, stddevs);
  const double incumbent = -model.best_standardized();
  Vector out(points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    out[c] = expected_improvement(-means[c], stddevs[c], incumbent, xi);
  }
  return out;
}

struct AcquisitionOptions {
  int restarts = 10;
  int probes_per_dim = 2000;
  /// Pattern search stops once its step falls below this (unit-cube units).
  double min_step = 1e-4;
  double initial_step = 0.1;
  /// Iteration cap per start; the search also stops early on min_step.
  int max_sweeps = 100;
  /// Extra starting points for the local refinement (e.g. the incumbent).
  std::vector<Vector> seeds;
  int threads = 1;
};

struct AcquisitionResult {
  Vector point;  // unit cube
  double value = 0.0;
};

/// Coordinate-wise pattern search maximizing the acquisition inside the unit
/// cube: try +/- step along every axis, move to the best improving neighbour,
/// otherwise halve the step. Stops when the step drops below min_step or after
/// max_sweeps iterations.
inline AcquisitionResult refine_acquisition(const GpModel& model, Vector x, double xi,
                                            double initial_step, double min_step,
                                            int max_sweeps = 100) {
  const Eigen::Index dim = x.size();
  double fx = acquisition_value(model, x, xi);
  double step = initial_step;
  Matrix neighbours(dim, 2 * dim);
  for (int sweep = 0; step >= min_step && sweep < max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      neighbours.col(2 * j) = x;
      neighbours.col(2 * j + 1) = x;
      neighbours(j, 2 * j) = std::min(1.0, x[j] + step);
      neighbours(j, 2 * j + 1) = std::max(0.0, x[j] - step);
    }
    const Vector values = acquisition_values(model, neighbours, xi);
    Eigen::Index best = 0;
    const double best_value = values.maxCoeff(&best);
    if (best_value > fx) {
      x = neighbours.col(best);
      fx = best_value;
    } else {
      step *= 0.5;
    }
  }
  return {x, fx};
}

/// Next point to evaluate: the EI maximizer over uniform probes and locally
/// refined random (and seeded) starts. All randomness is drawn up front and
/// ties resolve to the lowest index, so the result is deterministic for a given
/// generator state regardless of threading.
inline AcquisitionResult optimize_acquisition(const GpModel& model, double xi, Rng& rng,
                                              const AcquisitionOptions& options = {}) {
  const Eigen::Index dim = model.dim();
  const Eigen::Index n_probes = static_cast<Eigen::Index>(options.probes_per_dim) * dim;

  Matrix probes(dim, n_probes);
  for (Eigen::Index c = 0; c < n_probes; ++c) {
    for (Eigen::Index d = 0; d < dim; ++d) probes(d, c) = rng.uniform();
  }
  std::vector<Vector> starts;
  for (int r = 0; r < options.restarts; ++r) {
    Vector s(dim);
    for (Eigen::Index d = 0; d < dim; ++d) s[d] = rng.uniform();
    starts.push_back(std::move(s));
  }
  for (const auto& s : options.seeds) starts.push_back(s.cwiseMax(0.0).cwiseMin(1.0));

  constexpr Eigen::Index kChunk = 512;
  const auto n_chunks = static_cast<std::size_t>((n_probes + kChunk - 1) / kChunk);
  Vector probe_values(n_probes);
  detail::parallel_for(n_chunks, options.threads, [&](std::size_t i) {
    const Eigen::Index begin = static_cast<Eigen::Index>(i) * kChunk;
    const Eigen::Index count = std::min(kChunk, n_probes - begin);
    probe_values.segment(begin, count) = acquisition_values(model, probes.middleCols(begin, count), xi);
  });
  std::vector<AcquisitionResult> refined(starts.size());
  detail::parallel_for(starts.size(), options.threads, [&](std::size_t i) {
    refined[i] = refine_acquisition(model, starts[i], xi, options.initial_step, options.min_step,
                                   options.max_sweeps);
  });

  AcquisitionResult best{starts.empty() ? Vector(probes.col(0)) : starts.front(), -1.0};
  for (Eigen::Index c = 0; c < n_probes; ++c) {
    if (probe_values[c] > best.value) best = {probes.col(c), probe_values[c]};
  }
  for (const auto& r : refined) {
    if (r.value > best.value) best = r;
  }
  return best;
}

/// Minimizes `objective` over `space`: a Latin-hypercube design of n_init
/// points, then surrogate fit / EI maximization / evaluation until n_max
/// evaluations. Returns the best observed point.
inline BoResult bo_minimize(const std::function<double(const Vector&)>& objective,
                            const SearchSpace& space, const BoConfig& cfg, Rng& rng) {
  space.validate();
  cfg.validate();
  const Eigen::Index dim = space.dim();
  const KernelConfig kernel = cfg.kernel_for(dim);

  BoResult result;
  std::vector<Vector> unit_points;
  std::vector<double> values;  // warped, as seen by the surrogate

  auto evaluate = [&](const Vector& unit) {
    const Vector x = space.from_unit(unit);
    double v = objective(x);
    if (!std::isfinite(v)) v = kObjectivePenalty;
    unit_points.push_back(unit);
    values.push_back(apply_warp(cfg.warp, v));
    result.history.push_back({x, v});
    if (result.history.size() == 1 || v < result.best_value) {
      result.best_value = v;
      result.best_point = x;
    }
  };

  for (const auto& u : latin_hypercube(cfg.n_init, dim, rng)) evaluate(u);

  AcquisitionOptions acq;
  acq.restarts = cfg.acquisition_restarts;
  acq.probes_per_dim = cfg.probes_per_dim;
  acq.max_sweeps = cfg.max_refine_sweeps;
  acq.threads = cfg.threads > 0 ? cfg.threads : default_thread_count();

  while (static_cast<int>(values.size()) < cfg.n_max) {
    const GpModel model =
        gp_fit(unit_points, values, kernel, GpFitOptions{cfg.clip_standardized});
    const auto incumbent = std::min_element(values.begin(), values.end()) - values.begin();
    acq.seeds = {unit_points[static_cast<std::size_t>(incumbent)]};
    evaluate(optimize_acquisition(model, cfg.xi, rng, acq).point);
  }
  return result;
}

inline BoResult bo_minimize(const std::function<double(const Vector&)>& objective,
                            const SearchSpace& space, const BoConfig& cfg) {
  Rng rng(cfg.rng_seed);
  return bo_minimize(objective, space, cfg, rng);
}

}  // namespace furuta
