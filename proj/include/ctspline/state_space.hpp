#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "ctspline/error.hpp"
#include "ctspline/matrix_exponential.hpp"

namespace ctspline {

/// Numerical rank: count of singular values above n * eps * sigma_max.
inline Eigen::Index numerical_rank(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0;
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  const double sigma_max = sv(0);
  if (sigma_max == 0.0) return 0;
  const double threshold = static_cast<double>(std::max(m.rows(), m.cols())) *
                           std::numeric_limits<double>::epsilon() * sigma_max;
  return (sv.array() > threshold).count();
}

/// [b, Ab, ..., A^{n-1} b]
inline Eigen::MatrixXd controllability_matrix(const Eigen::MatrixXd& a,
                                              const Eigen::VectorXd& b) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd k(n, n);
  if (n == 0) return k;
  k.col(0) = b;
  for (Eigen::Index i = 1; i < n; ++i) k.col(i) = a * k.col(i - 1);
  return k;
}

/// [c, A^T c, ..., (A^T)^{n-1} c]
inline Eigen::MatrixXd observability_matrix(const Eigen::MatrixXd& a,
                                            const Eigen::VectorXd& c) {
  return controllability_matrix(a.transpose(), c);
}

// Single-input single-output system  x' = A x + b u,  y = c^T x.
// Instances only come out of make_state_space and are immutable, so every
// StateSpace in circulation is dimensionally consistent, finite,
// controllable and observable.
class StateSpace {
 public:
  const Eigen::MatrixXd& A() const { return a_; }
  const Eigen::VectorXd& b() const { return b_; }
  const Eigen::VectorXd& c() const { return c_; }
  Eigen::Index n() const { return a_.rows(); }

 private:
  StateSpace(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::VectorXd c)
      : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {}

  friend StateSpace make_state_space(Eigen::MatrixXd, Eigen::VectorXd,
                                     Eigen::VectorXd);

  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  Eigen::VectorXd c_;
};

inline StateSpace make_state_space(Eigen::MatrixXd a, Eigen::VectorXd b,
                                   Eigen::VectorXd c) {
  const Eigen::Index n = a.rows();
  if (n == 0 || a.cols() != n || b.size() != n || c.size() != n) {
    throw Error(ErrorKind::DimensionMismatch,
                "A is " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + ", b has " +
                    std::to_string(b.size()) + " entries, c has " +
                    std::to_string(c.size()));
  }
  if (!a.allFinite() || !b.allFinite() || !c.allFinite()) {
    throw Error(ErrorKind::NonFinite, "state-space matrices contain NaN/Inf");
  }
  const Eigen::Index ctrb_rank = numerical_rank(controllability_matrix(a, b));
  if (ctrb_rank < n) {
    throw Error(ErrorKind::NotControllable,
                "controllability matrix rank " + std::to_string(ctrb_rank) +
                    " < " + std::to_string(n));
  }
  const Eigen::Index obsv_rank = numerical_rank(observability_matrix(a, c));
  if (obsv_rank < n) {
    throw Error(ErrorKind::NotObservable,
                "observability matrix rank " + std::to_string(obsv_rank) +
                    " < " + std::to_string(n));
  }
  return StateSpace(std::move(a), std::move(b), std::move(c));
}

/// Realization of 1/(s^3 + 1) used by the reference experiment.
inline StateSpace reference_system() {
  Eigen::MatrixXd a(3, 3);
  a << 0, 0, -1,
       1, 0, 0,
       0, 1, 0;
  Eigen::VectorXd b(3);
  b << 1, 0, 0;
  Eigen::VectorXd c(3);
  c << 0, 0, 1;
  return make_state_space(std::move(a), std::move(b), std::move(c));
}

/// g(tau) = c^T e^{A tau} b on [0, horizon], zero outside.
inline double impulse_response(const StateSpace& sys, double tau,
                               double horizon) {
  if (!(horizon > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
  }
  if (tau < 0.0 || tau > horizon) return 0.0;
  return sys.c().dot(matrix_exponential(sys.A() * tau) * sys.b());
}

}  // namespace ctspline
