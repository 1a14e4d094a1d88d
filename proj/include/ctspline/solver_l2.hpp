#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "ctspline/error.hpp"

namespace ctspline {

struct L2Config {
  double lambda = 1e-4;
  Eigen::VectorXd weights;  // empty means all ones
};

namespace detail {

inline Eigen::VectorXd resolve_weights(const Eigen::VectorXd& weights,
                                       Eigen::Index count) {
  if (weights.size() == 0) return Eigen::VectorXd::Ones(count);
  if (weights.size() != count) {
    throw Error(ErrorKind::DimensionMismatch,
                "expected " + std::to_string(count) + " weights, got " +
                    std::to_string(weights.size()));
  }
  if (!(weights.array() > 0.0).all() || !weights.allFinite()) {
    throw Error(ErrorKind::NonPositiveWeight, "all weights must be finite and > 0");
  }
  return weights;
}

}  // namespace detail

/// max_i |((lambda I + W G) theta - W y)_i| accumulated in long double, so
/// the value reflects theta rather than the rounding of the check itself.
inline double l2_normal_residual(const Eigen::MatrixXd& gram, const Eigen::VectorXd& weights,
                                 const Eigen::VectorXd& y, double lambda,
                                 const Eigen::VectorXd& theta) {
  const Eigen::VectorXd w = detail::resolve_weights(weights, gram.rows());
  long double worst = 0.0L;
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    long double acc = 0.0L;
    for (Eigen::Index j = 0; j < gram.cols(); ++j) {
      acc += static_cast<long double>(gram(i, j)) * theta(j);
    }
    acc = static_cast<long double>(w(i)) * acc +
          static_cast<long double>(lambda) * theta(i) -
          static_cast<long double>(w(i)) * y(i);
    worst = std::max(worst, std::abs(acc));
  }
  return static_cast<double>(worst);
}

/// theta = (lambda I + W G)^{-1} W y with W = diag(weights).
///
/// LU with partial pivoting, then iterative refinement with residuals
/// accumulated in long double (G is badly conditioned and theta can reach
/// 1e4 or more, so a double residual is mostly rounding). Throws
/// SingularSystem if the relative residual stays above 1e-10.
inline Eigen::VectorXd solve_l2(const Eigen::MatrixXd& gram,
                                const Eigen::VectorXd& weights,
                                const Eigen::VectorXd& y, double lambda) {
  const Eigen::Index count = gram.rows();
  if (gram.cols() != count || y.size() != count) {
    throw Error(ErrorKind::DimensionMismatch,
                "G is " + std::to_string(gram.rows()) + "x" +
                    std::to_string(gram.cols()) + ", y has " +
                    std::to_string(y.size()) + " entries");
  }
  if (!(lambda > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "lambda must be > 0");
  }
  const Eigen::VectorXd w = detail::resolve_weights(weights, count);

  Eigen::MatrixXd system = w.asDiagonal() * gram;
  system.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = w.cwiseProduct(y);

  using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using LongVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  const LongMatrix system_ld = system.cast<long double>();
  const LongVector rhs_ld = rhs.cast<long double>();

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  Eigen::VectorXd theta = lu.solve(rhs);
  Eigen::VectorXd best = theta;
  double best_residual = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 4; ++step) {
    const LongVector r = rhs_ld - system_ld * theta.cast<long double>();
    const double residual = static_cast<double>(r.cwiseAbs().maxCoeff());
    if (residual < best_residual) {
      best_residual = residual;
      best = theta;
    }
    theta += lu.solve(Eigen::VectorXd(r.cast<double>()));
  }

  const double scale = rhs.cwiseAbs().maxCoeff();
  if (!best.allFinite() || best_residual > 1e-10 * scale) {
    throw Error(ErrorKind::SingularSystem,
                "normal-equation residual " + std::to_string(best_residual) +
                    " exceeds 1e-10 * " + std::to_string(scale));
  }
  return best;
}

/// lambda theta^T G theta + sum_i w_i ((G theta)_i - y_i)^2, the smoothing
/// cost restricted to controls spanned by the shifted impulse responses.
inline double l2_objective(const Eigen::MatrixXd& gram,
                           const Eigen::VectorXd& weights,
                           const Eigen::VectorXd& y, double lambda,
                           const Eigen::VectorXd& theta) {
  const Eigen::VectorXd w = detail::resolve_weights(weights, gram.rows());
  const Eigen::VectorXd fitted = gram * theta;
  return lambda * theta.dot(fitted) +
         w.dot((fitted - y).array().square().matrix());
}

}  // namespace ctspline
