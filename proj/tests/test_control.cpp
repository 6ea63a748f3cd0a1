#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "furuta/control.hpp"
#include "furuta/synthesis.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace furuta;
using testing_support::reals;
using testing_support::spectrum_distance;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

/// Independent CARE solution from the stable invariant subspace of the
/// Hamiltonian, computed directly with Eigen's complex eigensolver.
Matrix hamiltonian_care(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r) {
  const auto n = a.rows();
  Matrix h(2 * n, 2 * n);
  h << a, -b * r.inverse() * b.transpose(), -q, -a.transpose();
  Eigen::ComplexEigenSolver<Matrix> es(h);
  Eigen::MatrixXcd u(2 * n, n);
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()[i].real() < 0) u.col(c++) = es.eigenvectors().col(i);
  }
  return (u.bottomRows(n) * u.topRows(n).inverse()).real();
}

}  // namespace

TEST(Care, ScalarIntegrator) {
  const Matrix p = solve_care(scalar(0), scalar(1), scalar(1), scalar(1));
  EXPECT_NEAR(p(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(lqr_gain(scalar(0), scalar(1), scalar(1), scalar(1))(0, 0), 1.0, 1e-12);
}

TEST(Care, ScalarUnstable) {
  const Matrix p = solve_care(scalar(1), scalar(1), scalar(1), scalar(1));
  EXPECT_NEAR(p(0, 0), 1.0 + std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(lqr_gain(scalar(1), scalar(1), scalar(1), scalar(1))(0, 0), 1.0 + std::sqrt(2.0), 1e-12);
}

TEST(Care, RandomSystemsResidualAndStability) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 5;
    const int m = 1 + trial % 2;
    auto [a, b] = oracle::random_stabilizable(n, m, gen);
    const Matrix q = Matrix::Identity(n, n);
    const Matrix r = Matrix::Identity(m, m);
    const Matrix p = solve_care(a, b, q, r);
    EXPECT_LE(norm_inf(care_residual(a, b, q, r, p)), 1e-8 * norm_inf(q)) << "trial " << trial;
    EXPECT_LE(max_abs(p - p.transpose()), 1e-12 * max_abs(p));
    EXPECT_TRUE(is_symmetric_psd(p, 1e-9));
    const Matrix k = lqr_gain(a, b, q, r);
    EXPECT_LT(spectral_abscissa(eigenvalues(a - b * k)), 0.0);
    EXPECT_LE(max_abs(p - hamiltonian_care(a, b, q, r)), 1e-7 * std::max(1.0, max_abs(p)));
  }
}

TEST(Care, WeaklyControllableSystems) {
  // Wide sweep including pairs whose shifted starting gain is huge; the solver
  // must still reach a stabilizing solution with a small relative residual.
  for (unsigned seed = 0; seed < 10; ++seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 1 + trial % 6;
      const int m = 1 + (trial / 6) % 2;
      Matrix a(n, n), b(n, m);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(gen);
      for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = normal(gen);
      a -= (spectral_abscissa(eigenvalues(a)) + (trial % 2 ? -0.5 : 0.5)) * Matrix::Identity(n, n);
      const Matrix q = Matrix::Identity(n, n);
      const Matrix r = Matrix::Identity(m, m);
      Matrix p;
      ASSERT_NO_THROW(p = solve_care(a, b, q, r)) << "seed " << seed << " trial " << trial;
      const double terms = std::max(1.0, norm_inf(p * b * b.transpose() * p));
      EXPECT_LE(norm_inf(care_residual(a, b, q, r, p)), 1e-8 * terms);
      EXPECT_LT(spectral_abscissa(eigenvalues(a - b * b.transpose() * p)), 0.0);
    }
  }
}

TEST(Care, CanonicalRipAgreesWithHamiltonianOracle) {
  const StateSpace ss = canonical_rip_model();
  const Matrix q = reference::rip_state_weight();
  const Matrix r = reference::rip_input_weight();
  const Matrix p = solve_care(ss.A, ss.B, q, r);
  EXPECT_LE(norm_inf(care_residual(ss.A, ss.B, q, r, p)), 1e-8 * norm_inf(q));
  const Matrix k = lqr_gain(ss.A, ss.B, q, r);
  const Matrix k_oracle = r.inverse() * ss.B.transpose() * hamiltonian_care(ss.A, ss.B, q, r);
  EXPECT_LE(max_abs(k - k_oracle), 1e-6 * max_abs(k));
  EXPECT_LT(spectral_abscissa(eigenvalues(ss.A - ss.B * k)), 0.0);
  // The arm-angle entry is fixed by the weights alone: -sqrt(q11 / r).
  EXPECT_NEAR(k(0, 0), -std::sqrt(1.0 / 10.0), 1e-9);
}

TEST(Care, PoorlyScaledPendulumModel) {
  // Table I's gearbox makes the arm nearly uncontrollable; the solver has to
  // fall back from eigenvalue shifting to the Hamiltonian starting gain.
  const StateSpace ss = linearize(PendulumParams::table1());
  const Matrix q = reference::rip_state_weight();
  const Matrix r = reference::rip_input_weight();
  const Matrix p = solve_care(ss.A, ss.B, q, r);
  EXPECT_LE(norm_inf(care_residual(ss.A, ss.B, q, r, p)), 1e-8 * norm_inf(q));
  EXPECT_LT(spectral_abscissa(eigenvalues(ss.A - ss.B * lqr_gain(ss.A, ss.B, q, r))), 0.0);
}

TEST(Care, UncontrollableUnstableModeFails) {
  const Matrix a = Vector((Vector(2) << 1.0, 2.0).finished()).asDiagonal();
  const Matrix b = (Matrix(2, 1) << 1.0, 0.0).finished();
  EXPECT_THROW(solve_care(a, b, Matrix::Identity(2, 2), scalar(1)), SynthesisError);
}

TEST(Care, InvalidWeightsRejected) {
  EXPECT_THROW(solve_care(scalar(0), scalar(1), scalar(-1), scalar(1)), DefinitenessError);
  EXPECT_THROW(solve_care(scalar(0), scalar(1), scalar(1), scalar(0)), DefinitenessError);
  EXPECT_THROW(solve_care(Matrix::Zero(2, 2), scalar(1), scalar(1), scalar(1)), DimensionError);
}

TEST(Lyapunov, ContinuousResidual) {
  std::mt19937_64 gen(1);
  auto [a, b] = oracle::random_stabilizable(4, 1, gen);
  const Matrix f = a - 5.0 * Matrix::Identity(4, 4);
  const Matrix q = b * b.transpose() + Matrix::Identity(4, 4);
  const Matrix x = solve_continuous_lyapunov(f, q);
  EXPECT_LE(max_abs(f * x + x * f.transpose() + q), 1e-10 * max_abs(q));
}

TEST(Lyapunov, DiscreteFixedPoint) {
  const Matrix f = (Matrix(2, 2) << 0.5, 0.2, -0.1, 0.7).finished();
  const Matrix q = Matrix::Identity(2, 2);
  const Matrix x = solve_discrete_lyapunov(f, q);
  EXPECT_LE(max_abs(f * x * f.transpose() + q - x), 1e-12);
  EXPECT_THROW(solve_discrete_lyapunov(2.0 * Matrix::Identity(2, 2), q), NumericalError);
}

TEST(Prefilter, ToyStaticGain) {
  const StateSpace ss = toy_plant();
  const Matrix k = reference::toy_static_gain();
  const Matrix f = static_prefilter(ss, k);
  EXPECT_NEAR(f(0, 0), 2.0, 1e-12);
  // Oracle: closed-loop DC gain y_ss / r = C (I - (A - BK))^{-1} B F must be 1.
  const Matrix closed = ss.A - ss.B * k;
  const Matrix dc = ss.C * (Matrix::Identity(2, 2) - closed).fullPivLu().solve(ss.B) * f;
  EXPECT_NEAR(dc(0, 0), 1.0, 1e-12);
}

TEST(Prefilter, SignCancellation) {
  StateSpace ss{scalar(0), scalar(1), scalar(1), scalar(0), TimeDomain::discrete(1.0), scalar(0), scalar(0)};
  EXPECT_NEAR(static_prefilter(ss, scalar(0))(0, 0), 1.0, 1e-15);
}

TEST(Prefilter, SingularLoopThrows) {
  StateSpace ss{scalar(1), scalar(1), scalar(1), scalar(0), TimeDomain::discrete(1.0), scalar(0), scalar(0)};
  EXPECT_THROW(static_prefilter(ss, scalar(0)), PrefilterError);
  // Unobservable steady state: C (A - BK - I)^{-1} B = 0.
  StateSpace blind{Matrix::Zero(2, 2), (Matrix(2, 1) << 1, 0).finished(), (Matrix(1, 2) << 0, 1).finished(),
                   scalar(0), TimeDomain::discrete(1.0), Matrix::Zero(2, 2), scalar(0)};
  EXPECT_THROW(static_prefilter(blind, Matrix::Zero(1, 2)), PrefilterError);
}

TEST(Prefilter, DynamicCollapsesToStatic) {
  const StateSpace ss = toy_plant();
  DynamicController c = reference::toy_dynamic_controller();
  c.C_c.setZero();
  EXPECT_NEAR(dynamic_prefilter(ss, c)(0, 0), static_prefilter(ss, c.D_c)(0, 0), 1e-12);
  c = reference::toy_dynamic_controller();
  c.B_c.setZero();
  EXPECT_NEAR(dynamic_prefilter(ss, c)(0, 0), static_prefilter(ss, c.D_c)(0, 0), 1e-12);
}

TEST(Prefilter, ToyDynamicController) {
  const StateSpace ss = toy_plant();
  const auto c = reference::toy_dynamic_controller();
  const Matrix f = dynamic_prefilter(ss, c);
  // Oracle: DC gain of the augmented loop driven through B-bar F.
  const StateSpace aug = augmented_system(ss, c);
  const Matrix dc = aug.C * (Matrix::Identity(3, 3) - aug.A).fullPivLu().solve(aug.B) * f;
  EXPECT_NEAR(dc(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(f(0, 0), 41.0 / 30.0, 1e-12);
}

TEST(Prefilter, TrackedOutputSelection) {
  const StateSpace ss = c2d_zoh(canonical_rip_model(), 1e-3);
  const Matrix k = lqr_gain(canonical_rip_model().A, canonical_rip_model().B, reference::rip_state_weight(),
                            reference::rip_input_weight());
  EXPECT_THROW(static_prefilter(ss, k), PrefilterError);  // 3 outputs, 1 input
  const Matrix f = static_prefilter(ss, k, {0});
  const Matrix closed = ss.A - ss.B * k;
  const Matrix dc = ss.C.row(0) * (Matrix::Identity(5, 5) - closed).fullPivLu().solve(ss.B) * f;
  EXPECT_NEAR(dc(0, 0), 1.0, 1e-8);
  EXPECT_THROW(static_prefilter(ss, k, {7}), DimensionError);
}

TEST(Augmented, ToyPrescribedEigenvalues) {
  const Matrix a = augmented_matrix(toy_plant(), reference::toy_dynamic_controller());
  EXPECT_LT(spectrum_distance(eigenvalues(a), reals({0.5, 0.59, 0.8})), 1e-6);
  const auto report = stability_report(a, toy_plant().domain);
  EXPECT_TRUE(report.stable);
  EXPECT_NEAR(report.spectral_radius, 0.8, 1e-6);
}

TEST(Augmented, StaticGainSpectrum) {
  const Matrix closed = closed_loop_matrix(toy_plant(), reference::toy_static_gain());
  EXPECT_LT(spectrum_distance(eigenvalues(closed), reals({0.5, 0.8})), 1e-10);
}

TEST(Augmented, BlockTriangularSpectrumIsUnion) {
  std::mt19937_64 gen(77);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const StateSpace ss = canonical_rip_model();
    DynamicController c;
    const int nxc = 1 + trial % 3;
    c.A_c = Matrix(nxc, nxc);
    c.B_c = Matrix(nxc, 5);
    c.C_c = Matrix(1, nxc);
    c.D_c = Matrix(1, 5);
    for (auto* m : {&c.A_c, &c.B_c, &c.C_c, &c.D_c}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = normal(gen);
    }
    // Either coupling block vanishing makes the loop block triangular.
    if (trial % 2) {
      c.B_c.setZero();
    } else {
      c.C_c.setZero();
    }
    auto want = eigenvalues(ss.A - ss.B * c.D_c);
    for (const auto& v : eigenvalues(c.A_c)) want.push_back(v);
    const auto got = eigenvalues(augmented_matrix(ss, c));
    EXPECT_LT(spectrum_distance(got, want), 1e-8 * std::max(1.0, spectral_radius(want))) << trial;
  }
}

TEST(Augmented, OpenLoopPlusControllerPole) {
  const StateSpace ss = canonical_rip_model();
  DynamicController c{scalar(-1), Matrix::Zero(1, 5), Matrix::Zero(1, 1), Matrix::Zero(1, 5)};
  auto want = eigenvalues(ss.A);
  want.emplace_back(-1.0, 0.0);
  EXPECT_LT(spectrum_distance(eigenvalues(augmented_matrix(ss, c)), want), 1e-8);
}

TEST(Augmented, SystemBlocks) {
  const StateSpace ss = toy_plant();
  const StateSpace aug = augmented_system(ss, reference::toy_dynamic_controller());
  EXPECT_EQ(aug.A.rows(), 3);
  EXPECT_TRUE(aug.B.topRows(2).isApprox(ss.B));
  EXPECT_TRUE(aug.B.bottomRows(1).isZero(0.0));
  EXPECT_EQ(aug.C.cols(), 3);
  EXPECT_TRUE(aug.C.leftCols(2).isApprox(ss.C));
  EXPECT_EQ(aug.C(0, 2), 0.0);
  EXPECT_TRUE(aug.process_noise.topLeftCorner(2, 2).isApprox(ss.process_noise));
  EXPECT_TRUE(aug.process_noise.row(2).isZero(0.0));
  EXPECT_TRUE(aug.process_noise.col(2).isZero(0.0));
  EXPECT_NO_THROW(aug.validate());
}

TEST(Augmented, DimensionMismatch) {
  DynamicController c = reference::rip_dynamic_controller();
  EXPECT_THROW(augmented_matrix(toy_plant(), c), DimensionError);
  c.B_c = Matrix::Zero(2, 5);
  EXPECT_THROW(c.validate(), DimensionError);
}

TEST(Zoh, Integrator) {
  StateSpace ss{Matrix::Zero(2, 2), (Matrix(2, 1) << 1, 2).finished(), Matrix::Identity(2, 2),
                Matrix::Zero(2, 1), TimeDomain::continuous(), Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  const StateSpace d = c2d_zoh(ss, 0.25);
  EXPECT_TRUE(d.A.isIdentity(1e-15));
  EXPECT_TRUE(d.B.isApprox(0.25 * ss.B, 1e-15));
  EXPECT_TRUE(d.process_noise.isApprox(0.25 * Matrix::Identity(2, 2)));
  EXPECT_TRUE(d.measurement_noise.isIdentity());
  ASSERT_TRUE(d.domain.is_discrete());
  EXPECT_EQ(*d.domain.sample_time, 0.25);
}

TEST(Zoh, ScalarClosedForm) {
  const double a = -1.3, b = 0.7, ts = 0.4;
  StateSpace ss{scalar(a), scalar(b), scalar(1), scalar(0), TimeDomain::continuous(), scalar(0), scalar(0)};
  const StateSpace d = c2d_zoh(ss, ts);
  EXPECT_NEAR(d.A(0, 0), std::exp(a * ts), 1e-15);
  EXPECT_NEAR(d.B(0, 0), b * (std::exp(a * ts) - 1.0) / a, 1e-15);
}

TEST(Zoh, SmallSampleTimeLimit) {
  const StateSpace d = c2d_zoh(canonical_rip_model(), 1e-12);
  EXPECT_LE(max_abs(d.A - Matrix::Identity(5, 5)), 1e-8);
  EXPECT_LE(max_abs(d.B), 1e-9);
}

TEST(Zoh, SampledTrajectoryMatchesContinuous) {
  std::mt19937_64 gen(31);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a(3, 3), b(3, 1);
    for (int i = 0; i < 9; ++i) a.data()[i] = normal(gen);
    for (int i = 0; i < 3; ++i) b.data()[i] = normal(gen);
    const double shift = spectral_abscissa(eigenvalues(a));
    a -= (shift + 0.5) * Matrix::Identity(3, 3);
    StateSpace ss{a, b, Matrix::Identity(3, 3), Matrix::Zero(3, 1), TimeDomain::continuous(),
                  Matrix::Zero(3, 3), Matrix::Zero(3, 3)};
    const double ts = 0.1;
    const StateSpace d = c2d_zoh(ss, ts);
    Vector x_c = Vector::Ones(3), x_d = x_c;
    for (int k = 0; k < 20; ++k) {
      const double u = std::sin(0.7 * k);
      const auto f = [&](const Vector& x) { return Vector(a * x + b * u); };
      for (int i = 0; i < 1000; ++i) x_c = oracle::rk4(f, x_c, ts / 1000);
      x_d = d.A * x_d + d.B * u;
      EXPECT_LE((x_c - x_d).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial << " step " << k;
    }
  }
}

TEST(Zoh, RejectsBadInput) {
  EXPECT_THROW(c2d_zoh(toy_plant(), 1.0), ParameterError);
  EXPECT_THROW(c2d_zoh(canonical_rip_model(), 0.0), ParameterError);
  EXPECT_THROW(c2d_zoh(canonical_rip_model(), -1.0), ParameterError);
}

TEST(Zoh, ControllerDiscretization) {
  const DynamicController c = reference::rip_dynamic_controller();
  const DynamicController d = discretize_controller(c, 1e-3);
  EXPECT_NEAR(d.A_c(0, 0), std::exp(-0.1), 1e-15);
  EXPECT_TRUE(d.B_c.isZero(0.0));
  EXPECT_TRUE(d.D_c.isApprox(c.D_c));
}

TEST(Stability, Examples) {
  const Matrix unstable = Vector((Vector(2) << 0.5, 1.2).finished()).asDiagonal();
  EXPECT_FALSE(stability_report(unstable, TimeDomain::discrete(1.0)).stable);
  const Matrix hurwitz = Vector((Vector(2) << -1.0, -2.0).finished()).asDiagonal();
  const auto r = stability_report(hurwitz, TimeDomain::continuous());
  EXPECT_TRUE(r.stable);
  EXPECT_DOUBLE_EQ(r.spectral_abscissa, -1.0);
  EXPECT_FALSE(stability_report(Matrix::Zero(1, 1), TimeDomain::continuous()).stable);
  EXPECT_FALSE(stability_report(Matrix::Identity(1, 1), TimeDomain::discrete(1.0)).stable);
}

TEST(Stability, PublishedRipControllerIsStable) {
  const auto r = stability_report(augmented_matrix(canonical_rip_model(), reference::rip_dynamic_controller()),
                                  TimeDomain::continuous());
  EXPECT_TRUE(r.stable);
  EXPECT_LT(r.spectral_abscissa, 0.0);
}

TEST(LqrWeightsValidate, Shapes) {
  EXPECT_THROW((LqrWeights{Matrix::Identity(2, 2), scalar(1)}.validate(3, 1)), DimensionError);
  EXPECT_NO_THROW((LqrWeights{Matrix::Zero(2, 2), scalar(1)}.validate(2, 1)));
}
