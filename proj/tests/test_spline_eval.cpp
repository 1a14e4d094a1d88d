#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "ctspline/data_io.hpp"
#include "ctspline/fit.hpp"
#include "ctspline/gramian.hpp"
#include "ctspline/spline_eval.hpp"
#include "oracles.hpp"

using ctspline::Error;
using ctspline::ErrorKind;
using ctspline::SplineFit;

namespace {

ctspline::StateSpace scalar_system() {
  return ctspline::make_state_space(Eigen::MatrixXd::Constant(1, 1, -1.0),
                                    Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1));
}

SplineFit make_fit(const ctspline::StateSpace& sys, Eigen::VectorXd times, Eigen::VectorXd theta,
                   std::optional<Eigen::VectorXd> x0 = std::nullopt) {
  return SplineFit{sys, std::move(times), std::move(theta), std::move(x0), {}, {}};
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
}

}  // namespace

TEST(ControlSignal, ZeroCoefficients) {
  const auto fit = make_fit(ctspline::reference_system(), Eigen::VectorXd::LinSpaced(5, 0.5, 2.5),
                            Eigen::VectorXd::Zero(5));
  for (double t : {0.0, 0.7, 2.5}) EXPECT_EQ(ctspline::control_signal(fit, t), 0.0);
}

TEST(ControlSignal, SingleScalarTerm) {
  const auto fit = make_fit(scalar_system(), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1));
  EXPECT_NEAR(ctspline::control_signal(fit, 0.5), 0.6065307, 1e-7);
  EXPECT_NEAR(ctspline::control_signal(fit, 1.0), 1.0, 1e-15);  // g(0) = c^T b
}

TEST(ControlSignal, HorizonChecks) {
  const auto fit = make_fit(scalar_system(), Eigen::Vector2d(0.5, 1.0), Eigen::Vector2d(2.0, 3.0));
  // At t = T only the last term survives, with g(0) = 1.
  EXPECT_DOUBLE_EQ(ctspline::control_signal(fit, 1.0), 3.0);
  try {
    ctspline::control_signal(fit, 1.0 + 1e-9);
    FAIL() << "expected OutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfRange);
  }
  EXPECT_THROW(ctspline::control_signal(fit, -0.1), Error);
}

TEST(OutputCurve, MatchesGramAtSampleTimes) {
  const auto sys = ctspline::reference_system();
  const Eigen::VectorXd times = ctspline::reference_times();
  const Eigen::MatrixXd g = ctspline::gram_matrix(sys, times);
  std::mt19937_64 rng(21);
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd theta = random_vector(rng, times.size());
    const Eigen::VectorXd curve = ctspline::output_curve(make_fit(sys, times, theta), times);
    EXPECT_LE((curve - g * theta).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(OutputCurve, FreeResponse) {
  const auto fit = make_fit(scalar_system(), Eigen::Vector2d(1.0, 2.0), Eigen::VectorXd::Zero(2),
                            Eigen::VectorXd::Ones(1));
  EXPECT_NEAR(ctspline::output_curve(fit, Eigen::VectorXd::Ones(1))(0), std::exp(-1.0), 1e-15);
}

TEST(OutputCurve, LinearInTheta) {
  const auto sys = ctspline::reference_system();
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(30, 0.2, 4.0);
  const Eigen::VectorXd grid = ctspline::uniform_grid(0.0, 4.0, 101);
  std::mt19937_64 rng(22);
  const Eigen::VectorXd t1 = random_vector(rng, 30);
  const Eigen::VectorXd t2 = random_vector(rng, 30);
  const double a = 0.7;
  const double b = -1.9;
  const Eigen::VectorXd lhs = ctspline::output_curve(make_fit(sys, times, a * t1 + b * t2), grid);
  const Eigen::VectorXd rhs = a * ctspline::output_curve(make_fit(sys, times, t1), grid) +
                              b * ctspline::output_curve(make_fit(sys, times, t2), grid);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(OutputCurve, MatchesOdeDrivenByControl) {
  const auto sys = ctspline::reference_system();
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(25, 0.2, 3.0);
  std::mt19937_64 rng(23);
  const auto fit = make_fit(sys, times, random_vector(rng, 25), random_vector(rng, 3));
  const Eigen::VectorXd grid = ctspline::uniform_grid(0.0, 3.0, 61);

  // u has kinks at the sample times; the oracle steps land on them.
  std::vector<double> stops(grid.data(), grid.data() + grid.size());
  stops.insert(stops.end(), times.data(), times.data() + times.size());
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  const Eigen::VectorXd stop_vec = Eigen::Map<Eigen::VectorXd>(stops.data(), stops.size());
  const Eigen::VectorXd ode = ctspline::oracle::simulate_rk4(
      sys.A(), sys.b(), sys.c(), *fit.x0,
      [&](double t) { return ctspline::control_signal(fit, std::min(t, 3.0)); }, stop_vec, 1e-3);
  const Eigen::VectorXd curve = ctspline::output_curve(fit, grid);
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    const auto at = std::lower_bound(stops.begin(), stops.end(), grid(k)) - stops.begin();
    EXPECT_NEAR(curve(k), ode(at), 1e-6) << "t = " << grid(k);
  }
}

TEST(OutputCurve, RejectsPointsOutsideHorizon) {
  const auto fit = make_fit(scalar_system(), Eigen::Vector2d(0.5, 1.0), Eigen::Vector2d(1.0, 1.0));
  EXPECT_THROW(ctspline::output_curve(fit, Eigen::Vector2d(0.5, 1.5)), Error);
}

TEST(OutputCurve, InvalidFit) {
  auto fit = make_fit(scalar_system(), Eigen::Vector2d(0.5, 1.0), Eigen::VectorXd::Ones(3));
  EXPECT_THROW(ctspline::output_curve(fit, Eigen::VectorXd::Ones(1)), Error);
  fit = make_fit(scalar_system(), Eigen::Vector2d(1.0, 0.5), Eigen::VectorXd::Ones(2));
  EXPECT_THROW(ctspline::output_curve(fit, Eigen::VectorXd::Ones(1)), Error);
}

TEST(SparsityReport, Examples) {
  const auto rep = ctspline::sparsity_report(Eigen::Vector3d(0.002, -0.0005, 0.0), 0.001);
  EXPECT_EQ(rep.count_above, 1);
  EXPECT_EQ(rep.indices, std::vector<Eigen::Index>{0});
  EXPECT_DOUBLE_EQ(rep.l1_norm, 0.0025);
  EXPECT_EQ(ctspline::sparsity_report(Eigen::Vector4d(1e-300, -2.0, 0.0, 3.0), 0.0).count_above, 3);
  EXPECT_THROW(ctspline::sparsity_report(Eigen::Vector2d(1, 2), -1.0), Error);
}

TEST(FitError, ExactAndOffset) {
  const auto sys = scalar_system();
  const Eigen::VectorXd times = Eigen::Vector2d(1.0, 2.0);
  const auto fit = make_fit(sys, times, Eigen::Vector2d(0.5, -0.25));
  const Eigen::VectorXd grid = ctspline::uniform_grid(0.0, 2.0, 21);
  const Eigen::VectorXd curve = ctspline::output_curve(fit, grid);
  const auto exact = ctspline::fit_error(fit, curve, grid);
  EXPECT_EQ(exact.rmse, 0.0);
  EXPECT_EQ(exact.max_abs, 0.0);
  const Eigen::VectorXd shifted = (curve.array() + 0.3).matrix();
  const auto offset = ctspline::fit_error(fit, shifted, grid);
  EXPECT_NEAR(offset.rmse, 0.3, 1e-15);
  EXPECT_NEAR(offset.max_abs, 0.3, 1e-15);
}

TEST(UniformGrid, EndpointsAndCount) {
  const Eigen::VectorXd g = ctspline::uniform_grid(0.1, 5.1, 1001);
  EXPECT_EQ(g.size(), 1001);
  EXPECT_EQ(g(0), 0.1);
  EXPECT_EQ(g(1000), 5.1);
  EXPECT_NEAR(g(1) - g(0), 0.005, 1e-15);
  EXPECT_THROW(ctspline::uniform_grid(0.0, 1.0, 0), Error);
}

TEST(Fit, ReferenceL1FitTracksCleanCurve) {
  const auto sys = ctspline::reference_system();
  const auto syn = ctspline::synth_reference_dataset(0);
  ctspline::L1Config config;
  config.estimate_x0 = true;
  const auto fit = ctspline::fit_l1(sys, syn.data, config);
  EXPECT_TRUE(fit.report.converged);
  EXPECT_EQ(fit.settings.mode, ctspline::FitMode::L1);
  const Eigen::VectorXd grid = ctspline::uniform_grid(0.1, 5.1, 1001);
  EXPECT_LE(ctspline::fit_error(fit, syn.reference, grid).rmse, 0.35);
  EXPECT_LE(ctspline::sparsity_report(fit.theta, 1e-3).count_above, 30);
}
