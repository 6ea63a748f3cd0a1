#pragma once

// Gaussian-process regression surrogate with fixed hyperparameters.
//
// Inputs are expected in the unit cube; outputs are standardized to zero mean
// and unit variance before fitting and de-standardized on prediction.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "furuta/numerics.hpp"

namespace furuta {

enum class KernelKind { kSquaredExponential, kMatern52 };

/// Minimum diagonal regularization added to every kernel matrix.
inline constexpr double kGpJitterFloor = 1e-8;
/// Largest regularization tried before giving up on a factorization.
inline constexpr double kGpJitterCeiling = 1e-4;

struct KernelConfig {
  KernelKind kind = KernelKind::kSquaredExponential;
  Vector length_scales;  // one per input dimension
  double signal_variance = 1.0;
  double noise_variance = 1e-6;

  static KernelConfig isotropic(Eigen::Index dim, double length_scale,
                                KernelKind kind = KernelKind::kSquaredExponential) {
    KernelConfig k;
    k.kind = kind;
    k.length_scales = Vector::Constant(dim, length_scale);
    return k;
  }

  void validate(Eigen::Index dim) const {
    if (length_scales.size() != dim) {
      throw DimensionError("KernelConfig: length_scales must match input dimension");
    }
    if (!(length_scales.array() > 0.0).all()) {
      throw ParameterError("KernelConfig: length scales must be positive");
    }
    if (!(signal_variance > 0.0)) throw ParameterError("KernelConfig: signal variance must be > 0");
    if (!(noise_variance >= 0.0)) throw ParameterError("KernelConfig: noise variance must be >= 0");
  }

  template <typename DerivedA, typename DerivedB>
  double operator()(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) const {
    const double r2 = ((a - b).array() / length_scales.array()).square().sum();
    switch (kind) {
      case KernelKind::kMatern52: {
        const double r = std::sqrt(5.0 * r2);
        return signal_variance * (1.0 + r + r * r / 3.0) * std::exp(-r);
      }
      case KernelKind::kSquaredExponential:
      default:
        return signal_variance * std::exp(-0.5 * r2);
    }
  }
};

/// Pairwise kernel evaluations k(x_i, x_j).
inline Matrix kernel_matrix(const std::vector<Vector>& points, const KernelConfig& k) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = k(points[i], points[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      out(i, j) = out(j, i) = k(points[i], points[j]);
    }
  }
  return out;
}

/// Posterior mean and standard deviation at one point.
struct GpPrediction {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Fitted surrogate; immutable after gp_fit and safe to share between threads.
struct GpModel {
  std::vector<Vector> inputs;
  Vector outputs;         // standardized (and clipped, when requested)
  KernelConfig kernel;
  Matrix chol_factor;     // L with L L^T = K + jitter I
  Vector alpha;           // (K + jitter I)^{-1} outputs
  double jitter = kGpJitterFloor;
  double output_mean = 0.0;
  double output_scale = 1.0;

  Eigen::Index dim() const { return kernel.length_scales.size(); }

  /// Posterior in standardized units.
  GpPrediction predict_standardized(const Vector& x) const {
    const auto n = static_cast<Eigen::Index>(inputs.size());
    Vector cross(n);
    for (Eigen::Index i = 0; i < n; ++i) cross[i] = kernel(x, inputs[i]);
    const double mean = cross.dot(alpha);
    const Vector v = chol_factor.triangularView<Eigen::Lower>().solve(cross);
    const double variance = std::max(0.0, kernel(x, x) - v.squaredNorm());
    return {mean, std::sqrt(variance)};
  }

  /// Posterior in standardized units for every column of `points` (dim x P).
  void predict_standardized_batch(const Matrix& points, Vector& means, Vector& stddevs) const {
    const auto n = static_cast<Eigen::Index>(inputs.size());
    const auto count = points.cols();
    Matrix cross(n, count);
    for (Eigen::Index c = 0; c < count; ++c) {
      const auto x = points.col(c);
      for (Eigen::Index i = 0; i < n; ++i) cross(i, c) = kernel(x, inputs[i]);
    }
    means = cross.transpose() * alpha;
    chol_factor.triangularView<Eigen::Lower>().solveInPlace(cross);
    stddevs.resize(count);
    for (Eigen::Index c = 0; c < count; ++c) {
      const double prior = kernel(points.col(c), points.col(c));
      stddevs[c] = std::sqrt(std::max(0.0, prior - cross.col(c).squaredNorm()));
    }
  }

  /// Smallest standardized output (the incumbent under minimization).
  double best_standardized() const { return outputs.minCoeff(); }
};

struct GpFitOptions {
  /// Standardized outputs above this value are clipped before fitting.
  std::optional<double> clip_above;
};

/// Fits the surrogate. Escalates the diagonal jitter by decades from
/// max(noise_variance, 1e-8) up to 1e-4 before reporting a conditioning error.
inline GpModel gp_fit(const std::vector<Vector>& inputs, const std::vector<double>& outputs,
                      const KernelConfig& kernel, const GpFitOptions& options = {}) {
  if (inputs.empty()) throw DimensionError("gp_fit: need at least one observation");
  if (inputs.size() != outputs.size()) throw DimensionError("gp_fit: inputs/outputs size mismatch");
  const Eigen::Index dim = inputs.front().size();
  for (const auto& x : inputs) {
    if (x.size() != dim) throw DimensionError("gp_fit: inconsistent input dimension");
    require_finite(x, "gp_fit");
  }
  kernel.validate(dim);

  GpModel model;
  model.inputs = inputs;
  model.kernel = kernel;

  const auto n = static_cast<Eigen::Index>(outputs.size());
  Vector y = Eigen::Map<const Vector>(outputs.data(), n);
  require_finite(y, "gp_fit");
  model.output_mean = y.mean();
  const double var = (y.array() - model.output_mean).square().mean();
  model.output_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  y = (y.array() - model.output_mean) / model.output_scale;
  if (options.clip_above) y = y.cwiseMin(*options.clip_above);
  model.outputs = y;

  const Matrix k = kernel_matrix(inputs, kernel);
  for (double jitter = std::max(kernel.noise_variance, kGpJitterFloor);
       jitter <= kGpJitterCeiling * (1.0 + 1e-12); jitter *= 10.0) {
    Eigen::LLT<Matrix> llt(k + jitter * Matrix::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      model.jitter = jitter;
      model.chol_factor = llt.matrixL();
      model.alpha = llt.solve(y);
      return model;
    }
  }
  throw ConditioningError("gp_fit: kernel matrix is not positive definite even with jitter");
}

/// Posterior mean and standard deviation in the original output units.
inline GpPrediction gp_predict(const GpModel& model, const Vector& x) {
  if (x.size() != model.dim()) throw DimensionError("gp_predict: input dimension mismatch");
  const auto s = model.predict_standardized(x);
  return {s.mean * model.output_scale + model.output_mean, s.stddev * model.output_scale};
}

}  // namespace furuta
