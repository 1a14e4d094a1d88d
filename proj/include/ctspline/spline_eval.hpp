#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctspline/error.hpp"
#include "ctspline/gramian.hpp"
#include "ctspline/solver_l1.hpp"
#include "ctspline/state_space.hpp"

namespace ctspline {

enum class FitMode { L1, L2 };

struct FitSettings {
  FitMode mode = FitMode::L1;
  int p = 1;              // L1 only
  double penalty = 0.0;   // eta for L1, lambda for L2
  bool estimate_x0 = false;
};

/// A fitted spline: coefficients of the shifted impulse responses plus the
/// optional free initial state.
struct SplineFit {
  StateSpace system;
  Eigen::VectorXd times;
  Eigen::VectorXd theta;
  std::optional<Eigen::VectorXd> x0;
  FitSettings settings;
  SolverReport report;

  double horizon() const { return times(times.size() - 1); }
};

inline void validate_fit(const SplineFit& fit) {
  validate_times(fit.times);
  if (fit.theta.size() != fit.times.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "theta has " + std::to_string(fit.theta.size()) + " entries for " +
                    std::to_string(fit.times.size()) + " sample times");
  }
  if (fit.x0 && fit.x0->size() != fit.system.n()) {
    throw Error(ErrorKind::DimensionMismatch, "x0 length differs from the state dimension");
  }
}

namespace detail {

inline void check_in_horizon(double t, double horizon) {
  if (!(t >= 0.0 && t <= horizon)) {
    throw Error(ErrorKind::OutOfRange,
                "t = " + std::to_string(t) + " lies outside [0, " +
                    std::to_string(horizon) + "]");
  }
}

}  // namespace detail

/// u(t) = sum_i theta_i g(t_i - t).
inline double control_signal(const SplineFit& fit, double t) {
  validate_fit(fit);
  const double horizon = fit.horizon();
  detail::check_in_horizon(t, horizon);
  double u = 0.0;
  for (Eigen::Index i = 0; i < fit.theta.size(); ++i) {
    if (fit.theta(i) == 0.0 || fit.times(i) < t) continue;
    u += fit.theta(i) * impulse_response(fit.system, fit.times(i) - t, horizon);
  }
  return u;
}

/// y(t) = c^T e^{At} x0 + sum_i theta_i <g(t - .), g(t_i - .)> on a grid,
/// with the inner products in the same closed form as gram_matrix, so the
/// curve reproduces G theta at the sample times up to rounding.
inline Eigen::VectorXd output_curve(const SplineFit& fit, const Eigen::VectorXd& grid) {
  validate_fit(fit);
  const double horizon = fit.horizon();
  for (Eigen::Index k = 0; k < grid.size(); ++k) detail::check_in_horizon(grid(k), horizon);

  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < fit.theta.size(); ++i) {
    if (fit.theta(i) != 0.0) active.push_back(i);
  }

  std::vector<double> gaps;
  gaps.reserve(active.size() * static_cast<std::size_t>(grid.size()));
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    for (Eigen::Index i : active) gaps.push_back(std::abs(grid(k) - fit.times(i)));
  }
  const detail::TransitionTable transition(fit.system, std::move(gaps));

  const Eigen::VectorXd& c = fit.system.c();
  std::vector<Eigen::VectorXd> c_wc_samples;
  c_wc_samples.reserve(active.size());
  for (Eigen::Index i : active) {
    c_wc_samples.push_back(controllability_gramian(fit.system, fit.times(i)).transpose() * c);
  }

  const Eigen::MatrixXd at = fit.system.A().transpose();
  Eigen::VectorXd curve(grid.size());
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    const double t = grid(k);
    double y = 0.0;
    if (fit.x0) y += (matrix_exponential(at * t) * c).dot(*fit.x0);
    if (!active.empty()) {
      const Eigen::VectorXd c_wc_t = controllability_gramian(fit.system, t).transpose() * c;
      for (std::size_t a = 0; a < active.size(); ++a) {
        const double ti = fit.times(active[a]);
        const double entry = t <= ti ? kernel_entry(c_wc_t, transition(ti - t))
                                     : kernel_entry(c_wc_samples[a], transition(t - ti));
        y += fit.theta(active[a]) * entry;
      }
    }
    curve(k) = y;
  }
  return curve;
}

/// count uniformly spaced points from lo to hi inclusive.
inline Eigen::VectorXd uniform_grid(double lo, double hi, Eigen::Index count) {
  if (count < 2) {
    if (count == 1) return Eigen::VectorXd::Constant(1, lo);
    throw Error(ErrorKind::InvalidArgument, "grid needs at least one point");
  }
  Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(count, lo, hi);
  grid(count - 1) = hi;
  return grid;
}

struct SparsityReport {
  Eigen::Index count_above = 0;
  std::vector<Eigen::Index> indices;
  double l1_norm = 0.0;
};

/// Entries with |theta_i| > threshold, and ||theta||_1.
inline SparsityReport sparsity_report(const Eigen::VectorXd& theta, double threshold) {
  if (!(threshold >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "threshold must be >= 0");
  }
  SparsityReport rep;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (std::abs(theta(i)) > threshold) rep.indices.push_back(i);
  }
  rep.count_above = static_cast<Eigen::Index>(rep.indices.size());
  rep.l1_norm = theta.lpNorm<1>();
  return rep;
}

struct FitError {
  double rmse = 0.0;
  double max_abs = 0.0;
};

/// RMSE and max |deviation| of a curve against reference samples.
inline FitError curve_error(const Eigen::VectorXd& curve, const Eigen::VectorXd& reference) {
  if (curve.size() != reference.size() || curve.size() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "curve and reference differ in length");
  }
  const Eigen::VectorXd diff = curve - reference;
  return {std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size())),
          diff.cwiseAbs().maxCoeff()};
}

inline FitError fit_error(const SplineFit& fit, const Eigen::VectorXd& reference,
                          const Eigen::VectorXd& grid) {
  return curve_error(output_curve(fit, grid), reference);
}

inline FitError fit_error(const SplineFit& fit, const std::function<double(double)>& reference,
                          const Eigen::VectorXd& grid) {
  return fit_error(fit, Eigen::VectorXd(grid.unaryExpr(reference)), grid);
}

}  // namespace ctspline
