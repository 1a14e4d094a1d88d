#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctspline/error.hpp"
#include "ctspline/solver_l2.hpp"
#include "ctspline/state_space.hpp"

namespace ctspline {

struct L1Config {
  double eta = 0.01;
  int p = 1;
  Eigen::VectorXd weights;  // empty means all ones
  bool estimate_x0 = false;
  int max_iter = 50'000;
  double tol_abs = 1e-6;
  double tol_rel = 1e-4;
  double rho = 1.0;
};

struct SolverReport {
  int iterations = 0;
  std::vector<double> objective_history;
  double kkt_residual = 0.0;
  bool converged = false;
  std::string solver_name;
};

struct L1Solution {
  Eigen::VectorXd theta;
  std::optional<Eigen::VectorXd> x0;
  // Multiplier of the data-fit block (p = 1 only); lies in the box [-1, 1]
  // at optimality and certifies the solution through kkt_residual.
  std::optional<Eigen::VectorXd> loss_dual;
  SolverReport report;
};

inline void validate_l1_config(const L1Config& config) {
  if (!(config.eta > 0.0)) throw Error(ErrorKind::InvalidArgument, "eta must be > 0");
  if (config.p != 1 && config.p != 2) {
    throw Error(ErrorKind::InvalidArgument,
                "p must be 1 or 2, got " + std::to_string(config.p));
  }
  if (config.max_iter <= 0) throw Error(ErrorKind::InvalidArgument, "max_iter must be > 0");
  if (!(config.tol_abs > 0.0) || !(config.tol_rel > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "tolerances must be > 0");
  }
  if (!(config.rho > 0.0)) throw Error(ErrorKind::InvalidArgument, "rho must be > 0");
}

/// sign(v_i) * max(|v_i| - kappa, 0)
inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double kappa) {
  if (!(kappa >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "soft-threshold level must be >= 0");
  }
  return v.unaryExpr([kappa](double x) {
    if (x > kappa) return x - kappa;
    if (x < -kappa) return x + kappa;
    return 0.0;
  });
}

namespace detail {

// The fitting problem in stacked form: residual = design * [x0; theta] - target
// where design = W [H G] and target = W y. The leading `free` coordinates
// (the initial state) are not penalized.
struct StackedProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd target;
  Eigen::Index free = 0;

  Eigen::Index size() const { return design.cols(); }
};

inline StackedProblem stack_problem(const Eigen::MatrixXd& gram,
                                    const Eigen::MatrixXd* h,
                                    const Eigen::VectorXd& weights,
                                    const Eigen::VectorXd& y) {
  const Eigen::Index count = gram.rows();
  if (gram.cols() != count || y.size() != count) {
    throw Error(ErrorKind::DimensionMismatch,
                "G is " + std::to_string(gram.rows()) + "x" +
                    std::to_string(gram.cols()) + ", y has " +
                    std::to_string(y.size()) + " entries");
  }
  if (h != nullptr && h->rows() != count) {
    throw Error(ErrorKind::DimensionMismatch,
                "H has " + std::to_string(h->rows()) + " rows, expected " +
                    std::to_string(count));
  }
  const Eigen::VectorXd w = resolve_weights(weights, count);
  StackedProblem prob;
  prob.free = h != nullptr ? h->cols() : 0;
  prob.design.resize(count, prob.free + count);
  if (h != nullptr) prob.design.leftCols(prob.free) = w.asDiagonal() * (*h);
  prob.design.rightCols(count) = w.asDiagonal() * gram;
  prob.target = w.cwiseProduct(y);
  return prob;
}

inline Eigen::VectorXd stack_variables(const Eigen::VectorXd& theta,
                                       const std::optional<Eigen::VectorXd>& x0,
                                       Eigen::Index free) {
  Eigen::VectorXd v(free + theta.size());
  if (free > 0) {
    if (!x0 || x0->size() != free) {
      throw Error(ErrorKind::DimensionMismatch,
                  "initial state must have " + std::to_string(free) + " entries");
    }
    v.head(free) = *x0;
  }
  v.tail(theta.size()) = theta;
  return v;
}

inline double loss_value(const Eigen::VectorXd& residual, int p) {
  return p == 1 ? residual.lpNorm<1>() : residual.squaredNorm();
}

// Distance of -grad_i from eta * subdifferential of |theta_i|.
inline double l1_stationarity_gap(double theta, double grad, double eta) {
  if (theta > 0.0) return std::abs(grad + eta);
  if (theta < 0.0) return std::abs(grad - eta);
  return std::max(std::abs(grad) - eta, 0.0);
}

inline double kkt_stacked(const StackedProblem& prob, const Eigen::VectorXd& v,
                          double eta, int p,
                          const std::optional<Eigen::VectorXd>& loss_dual) {
  const Eigen::VectorXd residual = prob.design * v - prob.target;
  const Eigen::Index free = prob.free;
  const Eigen::Index count = v.size() - free;

  Eigen::VectorXd grad;
  double gap = 0.0;
  if (p == 2) {
    grad = 2.0 * prob.design.transpose() * residual;
  } else {
    // Multiplier for the loss block; the theta multiplier is then fixed by
    // stationarity as -W G^T dual and must sit in the eta box.
    Eigen::VectorXd dual = loss_dual ? *loss_dual
                                     : residual.unaryExpr([](double r) {
                                         return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
                                       });
    if (dual.size() != residual.size()) {
      throw Error(ErrorKind::DimensionMismatch, "loss dual has wrong length");
    }
    grad = prob.design.transpose() * dual;
    // dual in subdifferential of |r|  <=>  r == prox_{|.|}(r + dual)
    gap = (residual - soft_threshold(residual + dual, 1.0)).cwiseAbs().maxCoeff();
  }
  for (Eigen::Index i = 0; i < count; ++i) {
    gap = std::max(gap, l1_stationarity_gap(v(free + i), grad(free + i), eta));
  }
  if (free > 0) gap = std::max(gap, grad.head(free).cwiseAbs().maxCoeff());
  return gap;
}

inline double objective_stacked(const StackedProblem& prob, const Eigen::VectorXd& v,
                                double eta, int p) {
  return eta * v.tail(v.size() - prob.free).lpNorm<1>() +
         loss_value(prob.design * v - prob.target, p);
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double largest_eigenvalue(const Eigen::MatrixXd& sym, double rel_tol = 1e-8,
                                 int max_iter = 10'000) {
  const Eigen::Index size = sym.rows();
  Eigen::VectorXd x(size);
  for (Eigen::Index i = 0; i < size; ++i) x(i) = 1.0 + 0.01 * static_cast<double>(i % 7);
  x.normalize();
  double estimate = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd next = sym * x;
    const double rayleigh = x.dot(next);
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    x = next / norm;
    if (it > 0 && std::abs(rayleigh - estimate) <= rel_tol * std::abs(rayleigh)) {
      return std::max(rayleigh, norm);
    }
    estimate = rayleigh;
  }
  throw Error(ErrorKind::StepSizeFailure,
              "power iteration did not reach relative tolerance " +
                  std::to_string(rel_tol) + " in " + std::to_string(max_iter) +
                  " iterations");
}

struct Refinement {
  Eigen::VectorXd v;
  double value = 0.0;
  double kkt = std::numeric_limits<double>::infinity();
};

// Feature-sign search (Lee, Battle, Raina, Ng 2007) for
//   v^T Q v - 2 rhs^T v + offset + eta ||v_penalized||_1,
// started from the origin. Each step solves the sign-fixed quadratic on the
// active set exactly and line-searches over the zero crossings, so the
// objective strictly decreases and the active set is found in finitely many
// steps; the leading `free` coordinates are always active with sign 0.
inline Refinement active_set_refine(const StackedProblem& prob, double eta, double tol,
                                    int max_steps) {
  const Eigen::Index size = prob.size();
  const Eigen::Index free = prob.free;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
  Eigen::VectorXd sign = Eigen::VectorXd::Zero(size);
  std::vector<char> active(static_cast<std::size_t>(size), 0);
  for (Eigen::Index i = 0; i < free; ++i) active[static_cast<std::size_t>(i)] = 1;

  // Values and gradients come from residuals rather than the normal matrix,
  // whose squared conditioning would swamp the KKT test.
  auto value_of = [&](const Eigen::VectorXd& x) {
    return objective_stacked(prob, x, eta, 2);
  };
  auto grad_of = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return 2.0 * prob.design.transpose() * (prob.design * x - prob.target);
  };
  auto gap_of = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
    double gap = 0.0;
    for (Eigen::Index i = free; i < size; ++i) {
      gap = std::max(gap, l1_stationarity_gap(x(i), grad(i), eta));
    }
    if (free > 0) gap = std::max(gap, grad.head(free).cwiseAbs().maxCoeff());
    return gap;
  };

  double value = value_of(v);
  bool need_solve = free > 0;
  // Near the rounding floor the face solves can cycle without lowering the
  // objective; the best certified point seen is kept and the search stops
  // after kMaxStall steps without a decrease.
  constexpr int kMaxStall = 8;
  int stall = 0;
  Refinement best;
  for (int step = 0; step < max_steps && stall < kMaxStall; ++step) {
    if (need_solve) {
      const double previous = value;
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = 0; i < size; ++i) {
        if (active[static_cast<std::size_t>(i)]) idx.push_back(i);
      }
      const auto k = static_cast<Eigen::Index>(idx.size());
      // Sign-fixed face: D_A^T (D_A v - t) = -eta s / 2. With u the
      // minimum-norm solution of D_A^T u = s this is the least-squares
      // problem for D_A v ~ t - eta u / 2, solved without forming D_A^T D_A.
      Eigen::MatrixXd sub(prob.design.rows(), k);
      Eigen::VectorXd sub_sign(k);
      Eigen::VectorXd current(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        sub.col(a) = prob.design.col(idx[a]);
        sub_sign(a) = sign(idx[a]);
        current(a) = v(idx[a]);
      }
      const Eigen::MatrixXd sub_t = sub.transpose();
      const Eigen::VectorXd u = sub_t.completeOrthogonalDecomposition().solve(sub_sign);
      const Eigen::VectorXd target =
          sub.completeOrthogonalDecomposition().solve(prob.target - 0.5 * eta * u);
      if (!target.allFinite()) break;

      // Candidates: the full step and every zero crossing along the way.
      std::vector<double> stops = {1.0};
      for (Eigen::Index a = 0; a < k; ++a) {
        if (idx[a] < free || current(a) == 0.0) continue;
        if ((current(a) > 0.0) != (target(a) > 0.0)) {
          stops.push_back(current(a) / (current(a) - target(a)));
        }
      }
      Eigen::VectorXd best_v = v;
      double best_value = value;
      for (double t : stops) {
        Eigen::VectorXd trial = v;
        for (Eigen::Index a = 0; a < k; ++a) {
          trial(idx[a]) = current(a) + t * (target(a) - current(a));
          if (idx[a] >= free && t < 1.0 &&
              std::abs(current(a) / (current(a) - target(a)) - t) == 0.0) {
            trial(idx[a]) = 0.0;
          }
        }
        const double trial_value = value_of(trial);
        if (trial_value < best_value) {
          best_value = trial_value;
          best_v = trial;
        }
      }
      if (stops.size() == 1) {
        // No sign change: the full step is the exact minimizer on this face,
        // even when rounding hides the decrease.
        for (Eigen::Index a = 0; a < k; ++a) best_v(idx[a]) = target(a);
        best_value = std::min(value_of(best_v), value);
      } else if (!(best_value < value)) {
        break;
      }
      v = best_v;
      value = best_value;
      for (Eigen::Index i = free; i < size; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (!active[u]) continue;
        if (v(i) == 0.0) {
          active[u] = 0;
          sign(i) = 0.0;
        } else {
          sign(i) = v(i) > 0.0 ? 1.0 : -1.0;
        }
      }
      stall = value < previous ? 0 : stall + 1;
    }

    const Eigen::VectorXd grad = grad_of(v);
    const double full_gap = gap_of(v, grad);
    if (full_gap < best.kkt) {
      best.v = v;
      best.value = value;
      best.kkt = full_gap;
    }
    double active_gap = 0.0;
    for (Eigen::Index i = 0; i < size; ++i) {
      if (active[static_cast<std::size_t>(i)]) {
        active_gap = std::max(active_gap, std::abs(grad(i) + eta * sign(i)));
      }
    }
    if (active_gap > tol && need_solve) {
      need_solve = true;
      continue;
    }
    Eigen::Index worst = -1;
    double worst_excess = tol;
    for (Eigen::Index i = free; i < size; ++i) {
      if (active[static_cast<std::size_t>(i)]) continue;
      const double excess = std::abs(grad(i)) - eta;
      if (excess > worst_excess) {
        worst_excess = excess;
        worst = i;
      }
    }
    if (worst < 0 && active_gap <= tol) break;
    if (worst >= 0) {
      active[static_cast<std::size_t>(worst)] = 1;
      sign(worst) = grad(worst) > 0.0 ? -1.0 : 1.0;
    }
    need_solve = true;
  }

  if (best.v.size() == 0) {
    best.v = v;
    best.value = value;
    best.kkt = gap_of(v, grad_of(v));
  }
  return best;
}

// Monotone FISTA on eta ||theta||_1 + ||design v - target||_2^2 with step
// 1/L, L = 2 sigma_max(design)^2. Products with the normal matrix are
// tracked incrementally, so one matvec per iteration suffices. An
// active-set result replaces the iterate only if it does not raise the
// objective and has a smaller KKT gap.
inline L1Solution solve_stacked_fista(const StackedProblem& prob, const L1Config& config) {
  const Eigen::Index size = prob.size();
  const Eigen::Index free = prob.free;
  const double eta = config.eta;

  const Eigen::MatrixXd normal = prob.design.transpose() * prob.design;
  const Eigen::VectorXd rhs = prob.design.transpose() * prob.target;
  const double offset = prob.target.squaredNorm();

  const double lipschitz = 2.0 * largest_eigenvalue(normal) * (1.0 + 1e-6);
  L1Solution sol;
  sol.report.solver_name = "monotone-fista";
  if (lipschitz == 0.0) {
    sol.theta = Eigen::VectorXd::Zero(size - free);
    if (free > 0) sol.x0 = Eigen::VectorXd::Zero(free);
    sol.report.objective_history.push_back(offset);
    sol.report.converged = true;
    return sol;
  }
  const double step = 1.0 / lipschitz;

  // value = v^T Q v - 2 rhs^T v + ||target||^2 + eta ||theta||_1, given Qv.
  auto value_of = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& qv) {
    return v.dot(qv) - 2.0 * rhs.dot(v) + offset + eta * v.tail(size - free).lpNorm<1>();
  };
  auto kkt_of = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& qv) {
    const Eigen::VectorXd grad = 2.0 * (qv - rhs);
    double gap = 0.0;
    for (Eigen::Index i = free; i < size; ++i) {
      gap = std::max(gap, l1_stationarity_gap(v(i), grad(i), eta));
    }
    if (free > 0) gap = std::max(gap, grad.head(free).cwiseAbs().maxCoeff());
    return gap;
  };
  auto prox = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out = v;
    out.tail(size - free) = soft_threshold(v.tail(size - free), eta * step);
    return out;
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(size);
  Eigen::VectorXd qx = Eigen::VectorXd::Zero(size);
  Eigen::VectorXd extrap = x;
  Eigen::VectorXd q_extrap = qx;
  double fx = value_of(x, qx);
  double momentum = 1.0;
  double kkt = kkt_of(x, qx);
  sol.report.objective_history.push_back(fx);

  // Ill-conditioned problems stall FISTA long before the KKT tolerance; the
  // active-set search is tried once after kRefineAfter iterations and again
  // at the end if FISTA still has not converged.
  constexpr int kRefineAfter = 2000;
  bool refine_tried = false;
  auto try_refine = [&] {
    refine_tried = true;
    const Refinement refined =
        active_set_refine(prob, eta, 0.1 * config.tol_abs, 20 * static_cast<int>(size) + 100);
    const Eigen::VectorXd q_refined = normal * refined.v;
    const double f_refined = value_of(refined.v, q_refined);
    if (f_refined <= fx + 1e-12 * std::abs(fx) && refined.kkt < kkt) {
      x = refined.v;
      qx = q_refined;
      fx = f_refined;
      kkt = refined.kkt;
      extrap = x;
      q_extrap = qx;
      momentum = 1.0;
      sol.report.objective_history.push_back(fx);
      sol.report.solver_name = "monotone-fista+active-set";
    }
  };

  int iter = 0;
  while (kkt > config.tol_abs && iter < config.max_iter) {
    ++iter;
    const Eigen::VectorXd candidate = prox(extrap - step * 2.0 * (q_extrap - rhs));
    const Eigen::VectorXd q_candidate = normal * candidate;
    const double f_candidate = value_of(candidate, q_candidate);

    if (f_candidate <= fx) {
      const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      const double beta = (momentum - 1.0) / next_momentum;
      extrap = candidate + beta * (candidate - x);
      q_extrap = q_candidate + beta * (q_candidate - qx);
      x = candidate;
      qx = q_candidate;
      fx = f_candidate;
      momentum = next_momentum;
    } else {
      // Rejected step: stay put and restart the momentum.
      extrap = x;
      q_extrap = qx;
      momentum = 1.0;
    }
    sol.report.objective_history.push_back(fx);
    kkt = kkt_of(x, qx);
    if (iter == kRefineAfter && kkt > config.tol_abs) try_refine();
  }
  if (kkt > config.tol_abs && !refine_tried) try_refine();

  // x0 is unpenalized: an exact least-squares solve for it given theta never
  // raises the objective.
  if (free > 0) {
    Eigen::VectorXd polished = x;
    const Eigen::VectorXd partial =
        prob.target - prob.design.rightCols(size - free) * x.tail(size - free);
    polished.head(free) =
        prob.design.leftCols(free).completeOrthogonalDecomposition().solve(partial);
    const Eigen::VectorXd q_polished = normal * polished;
    const double f_polished = value_of(polished, q_polished);
    const double kkt_polished = kkt_of(polished, q_polished);
    if (f_polished <= fx && kkt_polished <= std::max(kkt, config.tol_abs)) {
      x = polished;
      fx = f_polished;
      kkt = kkt_polished;
    }
  }

  sol.theta = x.tail(size - free);
  if (free > 0) sol.x0 = x.head(free);
  sol.report.iterations = iter;
  sol.report.kkt_residual = kkt;
  sol.report.converged = kkt <= config.tol_abs;
  return sol;
}

// Least absolute deviations  min_b ||X b - y||_1  by Bloomfield-Steiger
// vertex descent: every step moves along the edge with the steepest
// normalized directional derivative, to the weighted median of the
// breakpoints, which zeroes one more residual. Finite and exact up to
// rounding; used on small restricted problems only.
struct LadResult {
  Eigen::VectorXd solution;
  std::vector<Eigen::Index> basic_rows;  // rows held at zero residual
  bool optimal = false;
};

inline LadResult lad_vertex_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                    int max_pivots) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  // residual(p) = R p + s, solution(p) = B p + b0, current point p = 0.
  Eigen::MatrixXd r_map = x;
  Eigen::VectorXd r_off = -y;
  Eigen::MatrixXd b_map = Eigen::MatrixXd::Identity(cols, cols);
  Eigen::VectorXd b_off = Eigen::VectorXd::Zero(cols);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(cols), -1);

  const double zero_tol = 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff());
  LadResult out;
  for (int pivot = 0; pivot < max_pivots; ++pivot) {
    Eigen::Index best_col = -1;
    double best_slope = -1e-12;
    for (Eigen::Index j = 0; j < cols; ++j) {
      double at_zero = 0.0;
      double signed_sum = 0.0;
      double norm = 1e-300;
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double rij = r_map(i, j);
        norm += std::abs(rij);
        if (std::abs(r_off(i)) <= zero_tol) {
          at_zero += std::abs(rij);
        } else {
          signed_sum += r_off(i) > 0.0 ? rij : -rij;
        }
      }
      const double slope = (at_zero - std::abs(signed_sum)) / norm;
      if (slope < best_slope) {
        best_slope = slope;
        best_col = j;
      }
    }
    if (best_col < 0) {
      out.optimal = true;
      break;
    }

    // Exact line search: weighted median of the breakpoints -s_i / R_ip.
    std::vector<std::pair<double, Eigen::Index>> breaks;
    double half = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double rip = r_map(i, best_col);
      if (rip == 0.0) continue;
      breaks.emplace_back(-r_off(i) / rip, i);
      half += std::abs(rip);
    }
    half *= 0.5;
    std::sort(breaks.begin(), breaks.end());
    Eigen::Index pivot_row = breaks.back().second;
    double acc = 0.0;
    for (const auto& [point, row] : breaks) {
      acc += std::abs(r_map(row, best_col));
      if (acc >= half) {
        pivot_row = row;
        break;
      }
    }

    // Re-parametrize: parameter best_col becomes residual pivot_row.
    const double pivot_value = r_map(pivot_row, best_col);
    const Eigen::RowVectorXd pivot_coef = r_map.row(pivot_row) / pivot_value;
    const double pivot_off = r_off(pivot_row) / pivot_value;
    auto eliminate = [&](Eigen::MatrixXd& map, Eigen::VectorXd& off) {
      const Eigen::VectorXd col = map.col(best_col);
      map -= col * pivot_coef;
      map.col(best_col) = col / pivot_value;
      off -= col * pivot_off;
    };
    eliminate(r_map, r_off);
    eliminate(b_map, b_off);
    r_map.row(pivot_row).setZero();
    r_map(pivot_row, best_col) = 1.0;
    r_off(pivot_row) = 0.0;
    basis[static_cast<std::size_t>(best_col)] = pivot_row;
  }
  out.solution = b_off;
  for (Eigen::Index row : basis) {
    if (row >= 0) out.basic_rows.push_back(row);
  }
  return out;
}

struct Polished {
  Eigen::VectorXd v;
  Eigen::VectorXd dual;
  double kkt = std::numeric_limits<double>::infinity();
};

// Exact finish for the p = 1 problem, warm-started from a support guess.
// The problem restricted to a column set C is an LAD regression (the eta
// |theta_i| terms become rows eta e_i with target 0) and is solved by vertex
// descent. At the resulting vertex the primal is re-solved on the
// interpolated samples Z, the loss multipliers on Z are fixed by stationarity
// of the support columns (sign(residual) elsewhere), and the KKT gap is
// measured on the full problem. Columns that violate |W G^T dual| <= eta
// join C and the round repeats.
inline Polished exact_polish(const StackedProblem& prob, const Eigen::VectorXd& hint,
                             double eta, double tol, int max_rounds = 20) {
  const Eigen::Index size = prob.size();
  const Eigen::Index free = prob.free;
  const Eigen::Index rows = prob.design.rows();

  std::vector<char> in_set(static_cast<std::size_t>(size), 0);
  for (Eigen::Index i = 0; i < size; ++i) {
    if (i < free || hint(i) != 0.0) in_set[static_cast<std::size_t>(i)] = 1;
  }

  Polished best;
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<Eigen::Index> columns;
    for (Eigen::Index i = 0; i < size; ++i) {
      if (in_set[static_cast<std::size_t>(i)]) columns.push_back(i);
    }
    const auto k = static_cast<Eigen::Index>(columns.size());
    if (k == 0) break;
    const auto penalized = static_cast<Eigen::Index>(
        std::count_if(columns.begin(), columns.end(), [&](Eigen::Index c) { return c >= free; }));

    Eigen::MatrixXd lad_x = Eigen::MatrixXd::Zero(rows + penalized, k);
    Eigen::VectorXd lad_y = Eigen::VectorXd::Zero(rows + penalized);
    lad_y.head(rows) = prob.target;
    Eigen::Index extra = rows;
    for (Eigen::Index b = 0; b < k; ++b) {
      lad_x.col(b).head(rows) = prob.design.col(columns[b]);
      if (columns[b] >= free) lad_x(extra++, b) = eta;
    }
    const LadResult lad = lad_vertex_descent(lad_x, lad_y, 50 * static_cast<int>(k) + 100);

    std::vector<Eigen::Index> zero_rows;
    for (Eigen::Index row : lad.basic_rows) {
      if (row < rows) zero_rows.push_back(row);
    }
    std::sort(zero_rows.begin(), zero_rows.end());
    std::vector<Eigen::Index> support;
    for (Eigen::Index b = 0; b < k; ++b) {
      if (columns[b] < free || lad.solution(b) != 0.0) support.push_back(columns[b]);
    }
    // Penalized columns whose penalty row is basic sit exactly at zero.
    for (Eigen::Index row : lad.basic_rows) {
      if (row < rows) continue;
      Eigen::Index b = 0;
      for (Eigen::Index seen = rows - 1; b < k; ++b) {
        if (columns[b] >= free && ++seen == row) break;
      }
      support.erase(std::remove(support.begin(), support.end(), columns[b]), support.end());
    }

    const auto s = static_cast<Eigen::Index>(support.size());
    const auto z = static_cast<Eigen::Index>(zero_rows.size());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
    Eigen::MatrixXd sub(z, s);
    for (Eigen::Index a = 0; a < z; ++a) {
      for (Eigen::Index b = 0; b < s; ++b) sub(a, b) = prob.design(zero_rows[a], support[b]);
    }
    if (z > 0 && s > 0) {
      Eigen::VectorXd sub_target(z);
      for (Eigen::Index a = 0; a < z; ++a) sub_target(a) = prob.target(zero_rows[a]);
      const Eigen::VectorXd v_support = sub.completeOrthogonalDecomposition().solve(sub_target);
      for (Eigen::Index b = 0; b < s; ++b) v(support[b]) = v_support(b);
    }

    const Eigen::VectorXd r = prob.design * v - prob.target;
    std::vector<char> is_zero(static_cast<std::size_t>(rows), 0);
    for (Eigen::Index j : zero_rows) is_zero[static_cast<std::size_t>(j)] = 1;
    Eigen::VectorXd dual(rows);
    for (Eigen::Index j = 0; j < rows; ++j) {
      dual(j) = is_zero[static_cast<std::size_t>(j)] ? 0.0
                                                     : (r(j) > 0.0 ? 1.0 : (r(j) < 0.0 ? -1.0 : 0.0));
    }
    if (z > 0 && s > 0) {
      // design_S^T dual = -eta sign(theta_S) on penalized columns, 0 on x0.
      Eigen::VectorXd needed(s);
      for (Eigen::Index b = 0; b < s; ++b) {
        const Eigen::Index col = support[b];
        const double target_grad =
            col < free ? 0.0 : (v(col) > 0.0 ? -eta : (v(col) < 0.0 ? eta : 0.0));
        needed(b) = target_grad - prob.design.col(col).dot(dual);
      }
      const Eigen::VectorXd dual_zero = sub.transpose().completeOrthogonalDecomposition().solve(needed);
      for (Eigen::Index a = 0; a < z; ++a) dual(zero_rows[a]) = dual_zero(a);
    }
    if (!v.allFinite() || !dual.allFinite()) break;

    const double gap = kkt_stacked(prob, v, eta, 1, dual);
    if (gap < best.kkt) {
      best.v = v;
      best.dual = dual;
      best.kkt = gap;
    }
    if (gap <= tol) break;

    // Column generation: bring in the worst violators outside C.
    const Eigen::VectorXd grad = prob.design.transpose() * dual;
    std::vector<std::pair<double, Eigen::Index>> violators;
    for (Eigen::Index i = free; i < size; ++i) {
      if (in_set[static_cast<std::size_t>(i)]) continue;
      const double excess = std::abs(grad(i)) - eta;
      if (excess > tol) violators.emplace_back(-excess, i);
    }
    if (violators.empty()) break;
    std::sort(violators.begin(), violators.end());
    const std::size_t take = std::min<std::size_t>(violators.size(), 10);
    for (std::size_t a = 0; a < take; ++a) {
      in_set[static_cast<std::size_t>(violators[a].second)] = 1;
    }
  }
  return best;
}

// ADMM on  min eta ||z1||_1 + ||z2||_1  s.t.  z1 = theta,
// z2 = design [x0; theta] - target, in scaled form. The v-update matrix
// E + design^T design (E = identity on theta) does not depend on rho, so it
// is factored once. rho is rebalanced every kBalanceStride iterations from
// the tolerance-normalized residuals, and every kPolishStride iterations
// the current support seeds exact_polish; a polished point whose KKT
// gap is within tol_abs ends the run.
inline L1Solution solve_stacked_admm(const StackedProblem& prob, const L1Config& config) {
  const Eigen::Index size = prob.size();
  const Eigen::Index free = prob.free;
  const Eigen::Index count = size - free;
  const Eigen::Index rows = prob.design.rows();
  const double eta = config.eta;
  constexpr int kObjectiveStride = 10;
  constexpr int kBalanceStride = 100;
  constexpr int kPolishStride = 50;

  Eigen::MatrixXd normal = prob.design.transpose() * prob.design;
  normal.diagonal().tail(count).array() += 1.0;

  // Without a full-rank free block the normal matrix is singular; the
  // minimum-norm solve then keeps x0 at its least-norm value.
  const bool full_rank = free == 0 || numerical_rank(prob.design.leftCols(free)) == free;
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  if (full_rank) {
    chol.compute(normal);
    if (chol.info() != Eigen::Success) {
      throw Error(ErrorKind::SingularSystem, "ADMM normal matrix is not positive definite");
    }
  } else {
    cod.compute(normal);
  }
  auto solve = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd {
    return full_rank ? Eigen::VectorXd(chol.solve(b)) : Eigen::VectorXd(cod.solve(b));
  };

  const Eigen::VectorXd design_t_target = prob.design.transpose() * prob.target;
  const double target_norm = prob.target.norm();
  double rho = config.rho;

  Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
  Eigen::VectorXd z1 = Eigen::VectorXd::Zero(count);
  Eigen::VectorXd z2 = -prob.target;
  Eigen::VectorXd u1 = Eigen::VectorXd::Zero(count);
  Eigen::VectorXd u2 = Eigen::VectorXd::Zero(rows);

  L1Solution sol;
  sol.report.solver_name = "admm";

  auto stacked = [&](const Eigen::VectorXd& x_free, const Eigen::VectorXd& theta) {
    Eigen::VectorXd out(size);
    out.head(free) = x_free;
    out.tail(count) = theta;
    return out;
  };

  Eigen::VectorXd best = Eigen::VectorXd::Zero(size);
  Eigen::VectorXd best_dual = Eigen::VectorXd::Zero(rows);
  double best_value = objective_stacked(prob, best, eta, 1);
  double best_kkt = std::numeric_limits<double>::infinity();
  sol.report.objective_history.push_back(best_value);

  const double sqrt_primal = std::sqrt(static_cast<double>(count + rows));
  const double sqrt_dual = std::sqrt(static_cast<double>(size));

  bool converged = false;
  int iter = 0;
  while (iter < config.max_iter) {
    ++iter;
    Eigen::VectorXd rhs = prob.design.transpose() * (z2 - u2) + design_t_target;
    rhs.tail(count) += z1 - u1;
    v = solve(rhs);

    const Eigen::VectorXd fitted = prob.design * v;
    const Eigen::VectorXd theta = v.tail(count);
    const Eigen::VectorXd z1_old = z1;
    const Eigen::VectorXd z2_old = z2;
    z1 = soft_threshold(theta + u1, eta / rho);
    z2 = soft_threshold(fitted - prob.target + u2, 1.0 / rho);
    const Eigen::VectorXd r1 = theta - z1;
    const Eigen::VectorXd r2 = fitted - prob.target - z2;
    u1 += r1;
    u2 += r2;

    const double primal = std::sqrt(r1.squaredNorm() + r2.squaredNorm());
    Eigen::VectorXd dual_vec = prob.design.transpose() * (z2 - z2_old);
    dual_vec.tail(count) += z1 - z1_old;
    const double dual = rho * dual_vec.norm();

    const double mv_norm = std::sqrt(theta.squaredNorm() + fitted.squaredNorm());
    const double z_norm = std::sqrt(z1.squaredNorm() + z2.squaredNorm());
    const double eps_primal = sqrt_primal * config.tol_abs +
                              config.tol_rel * std::max({mv_norm, z_norm, target_norm});
    Eigen::VectorXd mt_u = prob.design.transpose() * u2;
    mt_u.tail(count) += u1;
    const double eps_dual = sqrt_dual * config.tol_abs + config.tol_rel * rho * mt_u.norm();
    converged = primal <= eps_primal && dual <= eps_dual;

    const Eigen::VectorXd current = stacked(v.head(free), z1);
    if (converged || iter % kObjectiveStride == 0 || iter == config.max_iter) {
      const double value = objective_stacked(prob, current, eta, 1);
      sol.report.objective_history.push_back(value);
      if (value <= best_value) {
        best_value = value;
        best = current;
        best_dual = rho * u2;
        best_kkt = std::numeric_limits<double>::infinity();
      }
    }
    if (converged || iter % kPolishStride == 0 || iter == config.max_iter) {
      const Polished polished = exact_polish(prob, current, eta, config.tol_abs);
      if (polished.kkt <= config.tol_abs) {
        const double value = objective_stacked(prob, polished.v, eta, 1);
        sol.report.objective_history.push_back(value);
        best_value = value;
        best = polished.v;
        best_dual = polished.dual;
        best_kkt = polished.kkt;
        converged = true;
        sol.report.solver_name = "admm+exact-polish";
      }
    }
    if (converged) break;

    if (iter % kBalanceStride == 0) {
      const double primal_ratio = primal / eps_primal;
      const double dual_ratio = dual / eps_dual;
      if (primal_ratio > 10.0 * dual_ratio) {
        rho *= 2.0;
        u1 /= 2.0;
        u2 /= 2.0;
      } else if (dual_ratio > 10.0 * primal_ratio) {
        rho /= 2.0;
        u1 *= 2.0;
        u2 *= 2.0;
      }
    }
  }

  sol.theta = best.tail(count);
  if (free > 0) sol.x0 = best.head(free);
  sol.loss_dual = best_dual;
  sol.report.iterations = iter;
  sol.report.converged = converged;
  sol.report.kkt_residual =
      std::isfinite(best_kkt) ? best_kkt : kkt_stacked(prob, best, eta, 1, sol.loss_dual);
  return sol;
}

inline L1Solution solve_stacked(const StackedProblem& prob, const L1Config& config) {
  validate_l1_config(config);
  return config.p == 2 ? solve_stacked_fista(prob, config)
                       : solve_stacked_admm(prob, config);
}

}  // namespace detail

/// eta ||theta||_1 + ||W (H x0 + G theta - y)||_p^p; the H x0 term is
/// dropped when x0 is absent.
inline double objective(const Eigen::VectorXd& theta,
                        const std::optional<Eigen::VectorXd>& x0,
                        const Eigen::MatrixXd& gram, const Eigen::MatrixXd& h,
                        const Eigen::VectorXd& weights, const Eigen::VectorXd& y,
                        double eta, int p) {
  const auto prob = detail::stack_problem(gram, x0 ? &h : nullptr, weights, y);
  return detail::objective_stacked(prob, detail::stack_variables(theta, x0, prob.free),
                                   eta, p);
}

/// Optimality certificate: the largest violation of the subgradient
/// conditions at (theta, x0). For p = 1 the loss multiplier is taken from
/// loss_dual when given (the ADMM dual), else sign(residual).
inline double kkt_residual(const Eigen::VectorXd& theta,
                           const std::optional<Eigen::VectorXd>& x0,
                           const Eigen::MatrixXd& gram, const Eigen::MatrixXd& h,
                           const Eigen::VectorXd& weights, const Eigen::VectorXd& y,
                           double eta, int p,
                           const std::optional<Eigen::VectorXd>& loss_dual = std::nullopt) {
  if (p != 1 && p != 2) {
    throw Error(ErrorKind::InvalidArgument, "p must be 1 or 2");
  }
  const auto prob = detail::stack_problem(gram, x0 ? &h : nullptr, weights, y);
  return detail::kkt_stacked(prob, detail::stack_variables(theta, x0, prob.free), eta,
                             p, loss_dual);
}

/// eta ||theta||_1 + ||W (G theta - y)||_2^2 by monotone FISTA.
inline L1Solution solve_l1_p2(const Eigen::MatrixXd& gram, const Eigen::VectorXd& weights,
                              const Eigen::VectorXd& y, double eta, L1Config config = {}) {
  config.eta = eta;
  config.p = 2;
  return detail::solve_stacked(detail::stack_problem(gram, nullptr, weights, y), config);
}

/// eta ||theta||_1 + ||W (G theta - y)||_1 by ADMM.
inline L1Solution solve_l1_p1(const Eigen::MatrixXd& gram, const Eigen::VectorXd& weights,
                              const Eigen::VectorXd& y, double eta, L1Config config = {}) {
  config.eta = eta;
  config.p = 1;
  return detail::solve_stacked(detail::stack_problem(gram, nullptr, weights, y), config);
}

/// Joint fit of the unpenalized initial state x0 and the coefficients.
inline L1Solution solve_with_initial_state(const Eigen::MatrixXd& gram,
                                           const Eigen::MatrixXd& h,
                                           const Eigen::VectorXd& weights,
                                           const Eigen::VectorXd& y, double eta, int p,
                                           L1Config config = {}) {
  config.eta = eta;
  config.p = p;
  return detail::solve_stacked(detail::stack_problem(gram, &h, weights, y), config);
}

/// Dispatch on config.p and config.estimate_x0.
inline L1Solution solve_l1(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& h,
                           const Eigen::VectorXd& y, const L1Config& config) {
  return detail::solve_stacked(
      detail::stack_problem(gram, config.estimate_x0 ? &h : nullptr, config.weights, y),
      config);
}

}  // namespace ctspline
