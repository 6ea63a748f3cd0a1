#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "furuta/synthesis.hpp"
#include "oracles.hpp"

using namespace furuta;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

SearchSpace unit_box(Eigen::Index dim) { return {Vector::Zero(dim), Vector::Ones(dim)}; }

BoConfig small_config(std::uint64_t seed, int n_max) {
  BoConfig cfg;
  cfg.rng_seed = seed;
  cfg.n_max = n_max;
  cfg.threads = 1;
  return cfg;
}

Vector published_theta() {
  return vec({-100, 0, 0, 0, 0, 0, -0.5, -20.96, -39.76, 72.74, 92.61, -0.58});
}

}  // namespace

TEST(ExpectedImprovement, SymmetricPoint) {
  EXPECT_NEAR(expected_improvement(0.5, 1.0, 0.49, 0.01), 1.0 / std::sqrt(2 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0, 0.0), 0.39894, 1e-5);
}

TEST(ExpectedImprovement, NoUncertainty) {
  EXPECT_EQ(expected_improvement(0.0, 0.0, 0.0, 0.01), 0.0);
  EXPECT_EQ(expected_improvement(-1.0, 0.0, 0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(expected_improvement(2.0, 0.0, 0.5, 0.5), 1.0);
}

TEST(ExpectedImprovement, MatchesMonteCarlo) {
  EXPECT_NEAR(expected_improvement(1.0, 2.0, 0.0, 0.0), 1.3956, 1e-4);
  EXPECT_NEAR(expected_improvement(1.0, 2.0, 0.0, 0.0), oracle::monte_carlo_ei(1.0, 2.0, 0.0, 0.0, 1000000, 7),
              1e-2);
  EXPECT_NEAR(expected_improvement(-0.7, 0.4, 0.1, 0.05),
              oracle::monte_carlo_ei(-0.7, 0.4, 0.1, 0.05, 1000000, 11), 1e-3);
}

TEST(ExpectedImprovement, NonNegativeAndMonotoneInSigma) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_GE(expected_improvement(u(gen), std::abs(u(gen)), u(gen), std::abs(u(gen)) / 10), 0.0);
  }
  double previous = 0.0;
  for (double sigma = 0.01; sigma < 10.0; sigma *= 1.3) {
    const double ei = expected_improvement(0.3, sigma, 0.29, 0.01);
    EXPECT_GT(ei, previous);
    previous = ei;
  }
}

TEST(SearchSpaceTest, UnitRoundTripAndValidation) {
  SearchSpace s{vec({-2, 0}), vec({2, 10})};
  EXPECT_TRUE(s.from_unit(s.to_unit(vec({1, 3}))).isApprox(vec({1, 3})));
  EXPECT_TRUE(s.to_unit(vec({-2, 10})).isApprox(vec({0, 1})));
  EXPECT_THROW((SearchSpace{vec({1}), vec({1})}.validate()), ParameterError);
  EXPECT_THROW((SearchSpace{vec({1}), vec({1, 2})}.validate()), DimensionError);
}

TEST(BoConfigTest, Validation) {
  BoConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.n_init = 1;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = BoConfig{};
  cfg.n_max = cfg.n_init;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = BoConfig{};
  cfg.xi = -1;
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Warp, OrderPreservingAndOdd) {
  EXPECT_EQ(apply_warp(OutputWarp::kNone, -3.5), -3.5);
  EXPECT_NEAR(apply_warp(OutputWarp::kSignedLog, std::exp(1.0) - 1), 1.0, 1e-15);
  EXPECT_EQ(apply_warp(OutputWarp::kSignedLog, -2.0), -apply_warp(OutputWarp::kSignedLog, 2.0));
  double previous = -1e300;
  for (double y : {-1e6, -50.0, -1.0, -1e-3, 0.0, 1e-9, 0.5, 3.0, 1e4, 1e6}) {
    const double w = apply_warp(OutputWarp::kSignedLog, y);
    EXPECT_GT(w, previous) << y;
    previous = w;
  }
}

TEST(LatinHypercube, OnePointPerStratum) {
  Rng rng(12);
  const int n = 17;
  const auto pts = latin_hypercube(n, 3, rng);
  ASSERT_EQ(pts.size(), static_cast<std::size_t>(n));
  for (Eigen::Index d = 0; d < 3; ++d) {
    std::vector<int> hits(n, 0);
    for (const auto& p : pts) {
      ASSERT_GE(p[d], 0.0);
      ASSERT_LT(p[d], 1.0);
      ++hits[static_cast<std::size_t>(p[d] * n)];
    }
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Acquisition, DominatesEveryProbeAndSeed) {
  const GpModel m = gp_fit({vec({0.5})}, {1.0}, KernelConfig::isotropic(1, 0.2));
  Rng rng(1);
  AcquisitionOptions opts;
  opts.probes_per_dim = 200;
  const auto best = optimize_acquisition(m, 0.01, rng, opts);
  for (int i = 0; i <= 1000; ++i) {
    EXPECT_GE(best.value + 1e-15, acquisition_value(m, vec({i / 1000.0}), 0.01));
  }
}

TEST(Acquisition, BeatsRecordedMinimum) {
  const GpModel m = gp_fit({vec({0.0}), vec({0.2}), vec({0.5}), vec({0.9})}, {1.0, -3.0, 0.5, 2.0},
                           KernelConfig::isotropic(1, 0.2));
  Rng rng(2);
  const auto best = optimize_acquisition(m, 0.01, rng);
  EXPECT_GE(best.value, acquisition_value(m, vec({0.2}), 0.01));
}

TEST(Acquisition, MatchesDenseGridArgmax) {
  std::vector<Vector> x{vec({0.05}), vec({0.3}), vec({0.55}), vec({0.8}), vec({0.95})};
  const std::vector<double> y{0.8, -0.2, 0.1, -0.5, 0.6};
  const GpModel m = gp_fit(x, y, KernelConfig::isotropic(1, 0.15));
  constexpr int kGrid = 100000;
  double grid_best = -1.0, grid_arg = 0.0;
  for (int i = 0; i <= kGrid; ++i) {
    const double t = static_cast<double>(i) / kGrid;
    const double v = acquisition_value(m, vec({t}), 0.01);
    if (v > grid_best) grid_best = v, grid_arg = t;
  }
  Rng rng(3);
  const auto best = optimize_acquisition(m, 0.01, rng);
  EXPECT_NEAR(best.point[0], grid_arg, 2e-4);
  EXPECT_GE(best.value, grid_best * (1.0 - 1e-6));
}

TEST(Acquisition, DeterministicAcrossThreadCounts) {
  const GpModel m = gp_fit({vec({0.1, 0.1}), vec({0.6, 0.4}), vec({0.9, 0.8})}, {0.0, -1.0, 2.0},
                           KernelConfig::isotropic(2, 0.2));
  AcquisitionOptions one, four;
  four.threads = 4;
  Rng a(5), b(5);
  const auto ra = optimize_acquisition(m, 0.01, a, one);
  const auto rb = optimize_acquisition(m, 0.01, b, four);
  EXPECT_EQ(ra.value, rb.value);
  EXPECT_TRUE(ra.point == rb.point);
}

TEST(Acquisition, RefinementRespectsSweepCap) {
  const GpModel m = gp_fit({vec({0.5})}, {1.0}, KernelConfig::isotropic(1, 0.2));
  const auto capped = refine_acquisition(m, vec({0.5}), 0.01, 0.01, 1e-12, 3);
  EXPECT_LE(std::abs(capped.point[0] - 0.5), 0.03 + 1e-15);
}

TEST(BoMinimize, ConstantObjective) {
  const auto res = bo_minimize([](const Vector&) { return 2.5; }, unit_box(2), small_config(1, 15));
  EXPECT_EQ(res.best_value, 2.5);
  EXPECT_EQ(res.history.size(), 15u);
}

TEST(BoMinimize, QuadraticAgainstGridSearch) {
  const auto f = [](const Vector& x) { return (x[0] - 0.3) * (x[0] - 0.3); };
  double grid_arg = 0.0, grid_best = 1e300;
  for (int i = 0; i < 10000; ++i) {
    const double t = i / 9999.0;
    if (f(vec({t})) < grid_best) grid_best = f(vec({t})), grid_arg = t;
  }
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto res = bo_minimize(f, unit_box(1), small_config(seed, 30));
    EXPECT_NEAR(res.best_point[0], grid_arg, 0.05) << "seed " << seed;
  }
}

TEST(BoMinimize, RunningBestAndInitialDesign) {
  const auto f = [](const Vector& x) { return std::sin(7 * x[0]) * std::cos(5 * x[1]) + x[0]; };
  BoConfig cfg = small_config(8, 25);
  const auto res = bo_minimize(f, SearchSpace{vec({-1, -1}), vec({1, 1})}, cfg);
  double running = 1e300, initial_best = 1e300;
  for (std::size_t i = 0; i < res.history.size(); ++i) {
    running = std::min(running, res.history[i].value);
    if (i < static_cast<std::size_t>(cfg.n_init)) initial_best = running;
    EXPECT_EQ(f(res.history[i].point), res.history[i].value);
    EXPECT_TRUE((res.history[i].point.array().abs() <= 1.0).all());
  }
  EXPECT_EQ(res.best_value, running);
  EXPECT_LE(res.best_value, initial_best);
}

TEST(BoMinimize, BitIdenticalForSameSeed) {
  const auto f = [](const Vector& x) { return (x - vec({0.2, 0.7})).squaredNorm(); };
  BoConfig cfg = small_config(42, 20);
  const auto a = bo_minimize(f, unit_box(2), cfg);
  cfg.threads = 3;
  const auto b = bo_minimize(f, unit_box(2), cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_TRUE(a.history[i].point == b.history[i].point);
    EXPECT_EQ(a.history[i].value, b.history[i].value);
  }
}

TEST(BoMinimize, NonFiniteValuesBecomePenalty) {
  const auto res = bo_minimize(
      [](const Vector& x) { return x[0] > 0.5 ? std::nan("") : x[0]; }, unit_box(1), small_config(3, 12));
  for (const auto& e : res.history) EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_LE(res.best_value, 0.5);
}

TEST(Parameterization, PublishedControllerDecodes) {
  const auto c = decode_controller(published_theta());
  const auto want = reference::rip_dynamic_controller();
  EXPECT_TRUE(c.A_c == want.A_c);
  EXPECT_TRUE(c.B_c == want.B_c);
  EXPECT_TRUE(c.C_c == want.C_c);
  EXPECT_TRUE(c.D_c == want.D_c);
}

TEST(Parameterization, RoundTripAndErrors) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> n;
  const ControllerShape shape{4, 2, 3};
  Vector theta(shape.parameter_count());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = n(gen);
  EXPECT_EQ(shape.parameter_count(), 9 + 12 + 6 + 8);
  EXPECT_TRUE(encode_controller(decode_controller(theta, shape)) == theta);
  EXPECT_EQ(ControllerShape{}.parameter_count(), 12);
  EXPECT_THROW(decode_controller(Vector::Zero(11)), DimensionError);
  const auto zero = decode_controller(Vector::Zero(12));
  EXPECT_TRUE(zero.A_c.isZero(0.0) && zero.D_c.isZero(0.0));
}

TEST(Objective, Signs) {
  const StateSpace rip = canonical_rip_model();
  const double published = synthesis_objective(published_theta(), rip);
  EXPECT_LT(published, 0.0);
  const auto oracle_eigs = Eigen::EigenSolver<Matrix>(augmented_matrix(rip, reference::rip_dynamic_controller()))
                               .eigenvalues();
  EXPECT_NEAR(published, oracle_eigs.real().maxCoeff(), 1e-9);

  const double open = synthesis_objective(Vector::Zero(12), rip);
  const double open_abscissa = Eigen::EigenSolver<Matrix>(rip.A).eigenvalues().real().maxCoeff();
  EXPECT_NEAR(open, open_abscissa, 1e-9);
  EXPECT_GT(open, 7.0);

  const Vector toy = encode_controller(reference::toy_dynamic_controller());
  EXPECT_NEAR(synthesis_objective(toy, toy_plant()), -0.2, 1e-6);
}

TEST(Objective, LiteralInfinityNorm) {
  const StateSpace rip = canonical_rip_model();
  const auto eigs = eigenvalues(augmented_matrix(rip, reference::rip_dynamic_controller()));
  double want = 0.0;
  for (const auto& v : eigs) want = std::max(want, std::abs(v.real()));
  EXPECT_NEAR(synthesis_objective(published_theta(), rip, ObjectiveKind::kPaperInfNorm), want, 1e-9);
  EXPECT_EQ(parse_objective_kind("paper-infnorm"), ObjectiveKind::kPaperInfNorm);
  EXPECT_EQ(to_string(parse_objective_kind("abscissa")), "abscissa");
  EXPECT_THROW(parse_objective_kind("max"), ConfigError);
}

TEST(Objective, SimilarityInvariant) {
  std::mt19937_64 gen(10);
  std::normal_distribution<double> n;
  const StateSpace rip = canonical_rip_model();
  const ControllerShape shape{5, 1, 2};
  for (int trial = 0; trial < 10; ++trial) {
    Vector theta(shape.parameter_count());
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = n(gen);
    DynamicController c = decode_controller(theta, shape);
    Matrix t(2, 2);
    for (int i = 0; i < 4; ++i) t.data()[i] = n(gen);
    t += 3.0 * Matrix::Identity(2, 2);
    const Matrix ti = t.inverse();
    DynamicController s{t * c.A_c * ti, t * c.B_c, c.C_c * ti, c.D_c};
    EXPECT_NEAR(synthesis_objective(theta, rip, ObjectiveKind::kAbscissa, 2),
                synthesis_objective(encode_controller(s), rip, ObjectiveKind::kAbscissa, 2), 1e-8);
  }
}

TEST(Objective, DefaultSearchSpaceBracketsPublishedController) {
  const auto space = default_search_space(ControllerShape{}, TimeDomain::continuous());
  EXPECT_NO_THROW(space.validate());
  const Vector theta = published_theta();
  EXPECT_TRUE((theta.array() >= space.lower.array()).all());
  EXPECT_TRUE((theta.array() <= space.upper.array()).all());
  const auto discrete = default_search_space(ControllerShape{2, 1, 1}, TimeDomain::discrete(1.0));
  EXPECT_EQ(discrete.dim(), 1 + 2 + 1 + 2);
  EXPECT_EQ(discrete.upper[0], 1.0);
}

TEST(Synthesis, ToyPlantFindsStabilizingController) {
  const StateSpace toy = toy_plant();
  const ControllerShape shape{2, 1, 1};
  BoConfig cfg = small_config(1, 40);
  const auto res = synthesize_controller(toy, cfg, default_search_space(shape, toy.domain));
  EXPECT_LT(res.best_value, 0.0);
  EXPECT_TRUE(stability_report(augmented_matrix(toy, decode_controller(res.best_point, shape)), toy.domain).stable);
}
