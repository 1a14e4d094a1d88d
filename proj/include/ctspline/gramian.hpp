#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctspline/error.hpp"
#include "ctspline/matrix_exponential.hpp"
#include "ctspline/quadrature.hpp"
#include "ctspline/state_space.hpp"

namespace ctspline {

/// Throws unless 0 < t_1 < t_2 < ... < t_N with every entry finite.
inline void validate_times(const Eigen::VectorXd& times) {
  if (times.size() == 0) {
    throw Error(ErrorKind::InvalidArgument, "time vector is empty");
  }
  if (!times.allFinite()) {
    throw Error(ErrorKind::NonFinite, "time vector has NaN/Inf");
  }
  if (times(0) <= 0.0) {
    throw Error(ErrorKind::NonPositiveTime,
                "t_1 = " + std::to_string(times(0)) + " must be > 0");
  }
  for (Eigen::Index i = 1; i < times.size(); ++i) {
    if (!(times(i) > times(i - 1))) {
      throw Error(ErrorKind::NonIncreasingTimes,
                  "t[" + std::to_string(i) + "] = " + std::to_string(times(i)) +
                      " does not exceed t[" + std::to_string(i - 1) + "]");
    }
  }
}

/// W_c(t) = int_0^t e^{As} b b^T e^{A^T s} ds from one exponential of the
/// block matrix [[-A, b b^T], [0, A^T]] t (Van Loan):
/// W_c(t) = F22^T F12.
inline Eigen::MatrixXd controllability_gramian(const StateSpace& sys, double t) {
  if (!(t >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument,
                "gramian horizon must be >= 0, got " + std::to_string(t));
  }
  const Eigen::Index n = sys.n();
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = -sys.A();
  block.topRightCorner(n, n) = sys.b() * sys.b().transpose();
  block.bottomRightCorner(n, n) = sys.A().transpose();
  const Eigen::MatrixXd expo = matrix_exponential(block * t);
  const Eigen::MatrixXd wc =
      expo.bottomRightCorner(n, n).transpose() * expo.topRightCorner(n, n);
  return 0.5 * (wc + wc.transpose());
}

namespace detail {

// Sorted distinct nonnegative gaps t_j - t_i (j >= i) paired with
// e^{A^T gap} c. Lookup is exact on the double value, so every consumer of a
// given gap sees bit-identical factors.
class TransitionTable {
 public:
  TransitionTable(const StateSpace& sys, std::vector<double> gaps) {
    std::sort(gaps.begin(), gaps.end());
    gaps.erase(std::unique(gaps.begin(), gaps.end()), gaps.end());
    gaps_ = std::move(gaps);
    factors_.reserve(gaps_.size());
    const Eigen::MatrixXd at = sys.A().transpose();
    for (double gap : gaps_) factors_.push_back(matrix_exponential(at * gap) * sys.c());
  }

  const Eigen::VectorXd& operator()(double gap) const {
    const auto it = std::lower_bound(gaps_.begin(), gaps_.end(), gap);
    return factors_[static_cast<std::size_t>(it - gaps_.begin())];
  }

  std::size_t size() const { return gaps_.size(); }

 private:
  std::vector<double> gaps_;
  std::vector<Eigen::VectorXd> factors_;
};

}  // namespace detail

/// c^T W_c(t_min) e^{A^T (t_max - t_min)} c, the L2 inner product of the
/// shifted impulse responses g(t_a - .) and g(t_b - .).
inline double kernel_entry(const Eigen::VectorXd& c_wc_min,
                           const Eigen::VectorXd& transition_c) {
  return c_wc_min.dot(transition_c);
}

/// Grammian G_ij = int_0^T g(t_i - t) g(t_j - t) dt in closed form.
/// Needs N controllability gramians plus one exponential per distinct gap.
inline Eigen::MatrixXd gram_matrix(const StateSpace& sys,
                                   const Eigen::VectorXd& times) {
  validate_times(times);
  const Eigen::Index count = times.size();

  std::vector<double> gaps;
  gaps.reserve(static_cast<std::size_t>(count * (count + 1) / 2));
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = i; j < count; ++j) gaps.push_back(times(j) - times(i));
  }
  const detail::TransitionTable transition(sys, std::move(gaps));

  Eigen::MatrixXd gram(count, count);
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::VectorXd c_wc =
        controllability_gramian(sys, times(i)).transpose() * sys.c();
    for (Eigen::Index j = i; j < count; ++j) {
      const double entry = kernel_entry(c_wc, transition(times(j) - times(i)));
      gram(i, j) = entry;
      gram(j, i) = entry;
    }
  }
  return gram;
}

/// Same matrix by adaptive quadrature of the defining integral over
/// [0, min(t_i, t_j)]. Slow; exists to cross-check gram_matrix.
inline Eigen::MatrixXd gram_matrix_quadrature(const StateSpace& sys,
                                              const Eigen::VectorXd& times,
                                              double tol) {
  validate_times(times);
  if (!(tol > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "quadrature tolerance must be > 0");
  }
  const double horizon = times(times.size() - 1);
  const Eigen::Index count = times.size();
  Eigen::MatrixXd gram(count, count);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = i; j < count; ++j) {
      const double ti = times(i);
      const double tj = times(j);
      auto integrand = [&](double t) {
        return impulse_response(sys, ti - t, horizon) *
               impulse_response(sys, tj - t, horizon);
      };
      const double entry = integrate_adaptive(integrand, 0.0, std::min(ti, tj), tol);
      gram(i, j) = entry;
      gram(j, i) = entry;
    }
  }
  return gram;
}

/// Rows c^T e^{A t_j}: the free response at each sample time.
inline Eigen::MatrixXd h_matrix(const StateSpace& sys,
                                const Eigen::VectorXd& times) {
  validate_times(times);
  Eigen::MatrixXd h(times.size(), sys.n());
  const Eigen::MatrixXd at = sys.A().transpose();
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    h.row(j) = (matrix_exponential(at * times(j)) * sys.c()).transpose();
  }
  return h;
}

/// Everything the solvers need about a sampling pattern.
struct GramOperator {
  Eigen::MatrixXd G;
  Eigen::MatrixXd H;
  Eigen::VectorXd times;
  double horizon = 0.0;
};

inline GramOperator make_gram_operator(const StateSpace& sys,
                                       const Eigen::VectorXd& times) {
  GramOperator op;
  op.G = gram_matrix(sys, times);
  op.H = h_matrix(sys, times);
  op.times = times;
  op.horizon = times(times.size() - 1);
  return op;
}

}  // namespace ctspline
