#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ctspline/data_io.hpp"
#include "ctspline/gramian.hpp"
#include "ctspline/solver_l1.hpp"
#include "ctspline/solver_l2.hpp"
#include "oracles.hpp"

using ctspline::Error;
using ctspline::ErrorKind;
using ctspline::L1Config;

namespace {

Eigen::MatrixXd one(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }
Eigen::VectorXd vec1(double v) { return Eigen::VectorXd::Constant(1, v); }

struct Preset {
  Eigen::MatrixXd g;
  Eigen::MatrixXd h;
  Eigen::VectorXd y;
};

const Preset& reference_preset() {
  static const Preset preset = [] {
    const auto sys = ctspline::reference_system();
    const auto syn = ctspline::synth_reference_dataset(0);
    const auto op = ctspline::make_gram_operator(sys, syn.data.times);
    return Preset{op.G, op.H, syn.data.values};
  }();
  return preset;
}

// A small, well-scaled random problem built from an actual Gram matrix.
Preset small_problem(std::uint64_t seed, Eigen::Index count) {
  std::mt19937_64 rng(seed);
  const auto sys = ctspline::oracle::random_stable_system(rng, 2);
  const Eigen::VectorXd times = ctspline::oracle::random_times(rng, count, 0.2, 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Preset p;
  p.g = ctspline::gram_matrix(sys, times);
  p.g /= p.g.cwiseAbs().maxCoeff();
  p.h = ctspline::h_matrix(sys, times);
  p.y = Eigen::VectorXd::NullaryExpr(count, [&] { return normal(rng); });
  return p;
}

}  // namespace

TEST(Objective, Examples) {
  const Eigen::MatrixXd g = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd h(2, 0);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(2);
  EXPECT_EQ(ctspline::objective(Eigen::VectorXd::Zero(2), std::nullopt, g, h, w,
                                Eigen::VectorXd::Zero(2), 0.3, 1),
            0.0);
  EXPECT_DOUBLE_EQ(ctspline::objective(Eigen::Vector2d(1, 0), std::nullopt, g, h, w,
                                       Eigen::Vector2d(1, 0), 0.5, 2),
                   0.5);
  EXPECT_DOUBLE_EQ(ctspline::objective(Eigen::Vector2d(0.5, 0), std::nullopt, g, h, w,
                                       Eigen::Vector2d(1, 0), 1.0, 1),
                   1.0);
}

TEST(Objective, WeightEntersInsideTheNorm) {
  // p = 2 squares the weight: ||W r||^2 = sum w_i^2 r_i^2.
  const double value = ctspline::objective(vec1(0.0), std::nullopt, one(1.0), Eigen::MatrixXd(1, 0),
                                           vec1(3.0), vec1(2.0), 1.0, 2);
  EXPECT_DOUBLE_EQ(value, 36.0);
}

TEST(Objective, InitialStateTerm) {
  const Eigen::MatrixXd h = Eigen::MatrixXd::Ones(2, 1);
  const double value =
      ctspline::objective(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(1, 2.0),
                          Eigen::MatrixXd::Identity(2, 2), h, Eigen::VectorXd::Ones(2),
                          Eigen::Vector2d(2.0, 1.0), 5.0, 1);
  EXPECT_DOUBLE_EQ(value, 1.0);
}

TEST(SoftThreshold, Examples) {
  EXPECT_EQ(ctspline::soft_threshold(Eigen::Vector3d(3, -0.5, 1), 1.0), Eigen::Vector3d(2, 0, 0));
  const Eigen::Vector3d v(0.3, -2.0, 7.0);
  EXPECT_EQ(ctspline::soft_threshold(v, 0.0), v);
  EXPECT_EQ(ctspline::soft_threshold(Eigen::Vector3d::Zero(), 4.0), Eigen::Vector3d::Zero());
  EXPECT_EQ(ctspline::soft_threshold(Eigen::Vector2d(-3, 3), 1.0), Eigen::Vector2d(-2, 2));
  EXPECT_THROW(ctspline::soft_threshold(v, -1.0), Error);
}

TEST(L1Config, Validation) {
  auto kind = [](L1Config c) {
    try {
      ctspline::solve_l1_p1(one(1.0), Eigen::VectorXd(), vec1(1.0), c.eta, c);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  L1Config c;
  c.eta = -1.0;
  EXPECT_EQ(kind(c), ErrorKind::InvalidArgument);
  c = L1Config{};
  c.max_iter = 0;
  EXPECT_EQ(kind(c), ErrorKind::InvalidArgument);
  c = L1Config{};
  c.tol_abs = 0.0;
  EXPECT_EQ(kind(c), ErrorKind::InvalidArgument);
  c = L1Config{};
  c.rho = 0.0;
  EXPECT_EQ(kind(c), ErrorKind::InvalidArgument);

  L1Config bad_p;
  bad_p.p = 3;
  EXPECT_THROW(ctspline::solve_l1(one(1.0), one(1.0), vec1(1.0), bad_p), Error);
}

TEST(SolveL1P2, NullSolutionThreshold) {
  const auto p = small_problem(1, 8);
  const double eta = 2.0 * (p.g.transpose() * p.y).cwiseAbs().maxCoeff();
  const auto sol = ctspline::solve_l1_p2(p.g, Eigen::VectorXd(), p.y, eta);
  EXPECT_TRUE(sol.report.converged);
  EXPECT_EQ(sol.theta, Eigen::VectorXd::Zero(8));
}

TEST(SolveL1P2, ScalarAgainstGridSearch) {
  const auto sol = ctspline::solve_l1_p2(one(1.0), vec1(1.0), vec1(2.0), 1.0);
  const auto grid = ctspline::oracle::grid_search(
      [](double t) { return std::abs(t) + (t - 2.0) * (t - 2.0); }, -5.0, 5.0, 1e-5);
  EXPECT_NEAR(grid.argmin, 1.5, 1e-5);
  EXPECT_NEAR(sol.theta(0), grid.argmin, 1e-5);
  EXPECT_LE(ctspline::kkt_residual(vec1(1.5), std::nullopt, one(1.0), Eigen::MatrixXd(1, 0),
                                   vec1(1.0), vec1(2.0), 1.0, 2),
            1e-8);
}

TEST(SolveL1P2, HistoryIsMonotoneAndCertified) {
  const auto p = small_problem(2, 30);
  const auto sol = ctspline::solve_l1_p2(p.g, Eigen::VectorXd(), p.y, 0.05);
  ASSERT_TRUE(sol.report.converged);
  const auto& hist = sol.report.objective_history;
  for (std::size_t k = 1; k < hist.size(); ++k) EXPECT_LE(hist[k], hist[k - 1]) << "step " << k;
  EXPECT_LE(sol.report.kkt_residual, 1e-6);
  EXPECT_NEAR(ctspline::kkt_residual(sol.theta, std::nullopt, p.g, Eigen::MatrixXd(30, 0),
                                     Eigen::VectorXd::Ones(30), p.y, 0.05, 2),
              sol.report.kkt_residual, 1e-12);
}

TEST(SolveL1P2, NotBeatenByPerturbationsOrL2) {
  const auto p = small_problem(3, 25);
  const double eta = 0.02;
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(25);
  const Eigen::MatrixXd none(25, 0);
  const auto sol = ctspline::solve_l1_p2(p.g, w, p.y, eta);
  ASSERT_TRUE(sol.report.converged);
  const double best = ctspline::objective(sol.theta, std::nullopt, p.g, none, w, p.y, eta, 2);
  const double tol = 1e-9 * std::max(1.0, best);

  const Eigen::VectorXd l2 = ctspline::solve_l2(p.g, w, p.y, 1e-3);
  EXPECT_LE(best, ctspline::objective(l2, std::nullopt, p.g, none, w, p.y, eta, 2) + tol);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd delta = Eigen::VectorXd::NullaryExpr(25, [&] { return normal(rng); });
    delta *= 1e-3 / delta.norm();
    EXPECT_LE(best,
              ctspline::objective(sol.theta + delta, std::nullopt, p.g, none, w, p.y, eta, 2) + tol);
  }
}

TEST(SolveL1P2, ReferencePresetIsSparseAndCertified) {
  const auto& p = reference_preset();
  const auto sol = ctspline::solve_l1_p2(p.g, Eigen::VectorXd(), p.y, 0.01);
  EXPECT_TRUE(sol.report.converged);
  EXPECT_LE(sol.report.kkt_residual, 1e-6);
  EXPECT_LT((sol.theta.array().abs() > 1e-3).count(), 50);
}

TEST(SolveL1P1, ScalarExamplesAgainstGridSearch) {
  for (double eta : {0.5, 2.0}) {
    const auto sol = ctspline::solve_l1_p1(one(1.0), vec1(1.0), vec1(2.0), eta);
    const auto grid = ctspline::oracle::grid_search(
        [eta](double t) { return eta * std::abs(t) + std::abs(t - 2.0); }, -5.0, 5.0, 1e-5);
    EXPECT_TRUE(sol.report.converged);
    EXPECT_NEAR(sol.theta(0), eta < 1.0 ? 2.0 : 0.0, 1e-9);
    EXPECT_NEAR(sol.theta(0), grid.argmin, 1e-3);
  }
}

TEST(SolveL1P1, RandomScalarInstancesAgainstGridSearch) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> pos(0.2, 2.0);
  std::uniform_real_distribution<double> val(-3.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const double g = pos(rng);
    const double w = pos(rng);
    const double y = val(rng);
    const double eta = pos(rng);
    const auto sol = ctspline::solve_l1_p1(one(g), vec1(w), vec1(y), eta);
    const auto grid = ctspline::oracle::grid_search(
        [&](double t) { return eta * std::abs(t) + w * std::abs(g * t - y); }, -20.0, 20.0, 1e-5);
    // Ties (eta == w g) leave a whole interval optimal; compare values there.
    const double value = eta * std::abs(sol.theta(0)) + w * std::abs(g * sol.theta(0) - y);
    EXPECT_NEAR(value, grid.value, 1e-4 * std::max(1.0, grid.value)) << "instance " << k;
    if (std::abs(eta - w * g) > 1e-3) {
      EXPECT_NEAR(sol.theta(0), grid.argmin, 1e-3) << "instance " << k;
    }
  }
}

TEST(SolveL1P1, ThreeDimensionalInstancesAgainstVertexEnumeration) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = small_problem(100 + seed, 3);
    const Eigen::VectorXd w = Eigen::Vector3d(1.0, 0.5, 2.0);
    const double eta = 0.1 + 0.1 * static_cast<double>(seed);
    const auto sol = ctspline::solve_l1_p1(p.g, w, p.y, eta);
    const double value =
        ctspline::objective(sol.theta, std::nullopt, p.g, Eigen::MatrixXd(3, 0), w, p.y, eta, 1);
    const double exact = ctspline::oracle::lad_lasso_vertex_min(p.g, w, p.y, eta);
    EXPECT_LE(std::abs(value - exact), 1e-9 * std::max(1.0, exact)) << "seed " << seed;
  }
}

TEST(SolveL1P1, DualCertificate) {
  const auto p = small_problem(5, 40);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(40);
  const auto sol = ctspline::solve_l1_p1(p.g, w, p.y, 0.05);
  ASSERT_TRUE(sol.report.converged);
  ASSERT_TRUE(sol.loss_dual.has_value());
  EXPECT_LE(sol.loss_dual->cwiseAbs().maxCoeff(), 1.0 + 1e-9);
  EXPECT_LE(ctspline::kkt_residual(sol.theta, std::nullopt, p.g, Eigen::MatrixXd(40, 0), w, p.y,
                                   0.05, 1, sol.loss_dual),
            1e-6);
}

TEST(SolveL1P1, ScalingIdentities) {
  const auto p = small_problem(6, 20);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(20);
  const Eigen::MatrixXd none(20, 0);
  const double eta = 0.05;
  const double alpha = 3.0;
  const auto base = ctspline::solve_l1_p1(p.g, w, p.y, eta);
  const double base_value = ctspline::objective(base.theta, std::nullopt, p.g, none, w, p.y, eta, 1);

  // (W, eta) -> (alpha W, alpha eta): same minimizers, objective times alpha.
  const auto same = ctspline::solve_l1_p1(p.g, alpha * w, p.y, alpha * eta);
  EXPECT_NEAR(ctspline::objective(same.theta, std::nullopt, p.g, none, alpha * w, p.y,
                                  alpha * eta, 1),
              alpha * base_value, 1e-9 * alpha * base_value);
  EXPECT_LE((same.theta - base.theta).cwiseAbs().maxCoeff(), 1e-6);

  // y -> alpha y: minimizers and objective both scale by alpha.
  const Eigen::VectorXd scaled_y = alpha * p.y;
  const auto scaled = ctspline::solve_l1_p1(p.g, w, scaled_y, eta);
  EXPECT_NEAR(ctspline::objective(scaled.theta, std::nullopt, p.g, none, w, scaled_y, eta, 1),
              alpha * base_value, 1e-9 * alpha * base_value);
  EXPECT_LE((scaled.theta - alpha * base.theta).cwiseAbs().maxCoeff(), 1e-6 * alpha);
}

TEST(SolveWithInitialState, ZeroHReducesToPlainSolve) {
  const auto p = small_problem(7, 15);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(15);
  for (int pe : {1, 2}) {
    const auto joint =
        ctspline::solve_with_initial_state(p.g, Eigen::MatrixXd::Zero(15, 2), w, p.y, 0.05, pe);
    const auto plain = pe == 1 ? ctspline::solve_l1_p1(p.g, w, p.y, 0.05)
                               : ctspline::solve_l1_p2(p.g, w, p.y, 0.05);
    ASSERT_TRUE(joint.x0.has_value());
    EXPECT_LE((joint.theta - plain.theta).cwiseAbs().maxCoeff(), 1e-6) << "p = " << pe;
  }
}

TEST(SolveWithInitialState, ExactFreeResponseNeedsNoCoefficients) {
  const auto p = small_problem(8, 12);
  const Eigen::Vector2d xbar(0.8, -1.1);
  const Eigen::VectorXd y = p.h * xbar;
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(12);
  const auto sol = ctspline::solve_with_initial_state(p.g, p.h, w, y, 0.05, 2);
  ASSERT_TRUE(sol.report.converged);
  EXPECT_EQ(ctspline::objective(Eigen::VectorXd::Zero(12), Eigen::VectorXd(xbar), p.g, p.h, w, y,
                                0.05, 2),
            0.0);
  EXPECT_LE(sol.theta.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((p.h * *sol.x0 - y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveWithInitialState, InitialStateIsNotPenalized) {
  // A huge eta zeroes theta but cannot shrink x0.
  const auto p = small_problem(9, 12);
  const Eigen::Vector2d xbar(3.0, 2.0);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(12);
  const auto sol = ctspline::solve_with_initial_state(p.g, p.h, w, p.h * xbar, 1e6, 1);
  EXPECT_EQ(sol.theta, Eigen::VectorXd::Zero(12));
  EXPECT_LE((*sol.x0 - xbar).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(KktResidual, Examples) {
  const Eigen::MatrixXd g = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd none(2, 0);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(2);
  for (int pe : {1, 2}) {
    EXPECT_EQ(ctspline::kkt_residual(Eigen::VectorXd::Zero(2), std::nullopt, g, none, w,
                                     Eigen::VectorXd::Zero(2), 0.1, pe),
              0.0);
    EXPECT_GT(ctspline::kkt_residual(Eigen::Vector2d(5.0, -4.0), std::nullopt, g, none, w,
                                     Eigen::Vector2d(1.0, 1.0), 0.1, pe),
              0.0);
  }
}

TEST(ReferencePreset, SparsityShrinksWithEta) {
  const auto& p = reference_preset();
  long previous = 1'000'000;
  for (double eta : {0.001, 0.01, 0.1}) {
    L1Config config;
    config.eta = eta;
    config.estimate_x0 = true;
    const auto sol = ctspline::solve_l1(p.g, p.h, p.y, config);
    EXPECT_TRUE(sol.report.converged) << "eta = " << eta;
    const long count = (sol.theta.array().abs() > 1e-3).count();
    EXPECT_LE(count, previous) << "eta = " << eta;
    previous = count;
  }
}
