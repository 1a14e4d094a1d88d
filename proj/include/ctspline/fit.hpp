#pragma once

#include <Eigen/Dense>

#include "ctspline/data_io.hpp"
#include "ctspline/gramian.hpp"
#include "ctspline/solver_l1.hpp"
#include "ctspline/solver_l2.hpp"
#include "ctspline/spline_eval.hpp"
#include "ctspline/state_space.hpp"

namespace ctspline {

inline SplineFit fit_l2(const StateSpace& sys, const DataSet& data,
                        const Eigen::MatrixXd& gram, double lambda) {
  SplineFit fit{sys, data.times, solve_l2(gram, data.weights, data.values, lambda),
                std::nullopt, {FitMode::L2, 2, lambda, false}, {}};
  fit.report.solver_name = "dense-lu";
  fit.report.converged = true;
  return fit;
}

inline SplineFit fit_l2(const StateSpace& sys, const DataSet& data, double lambda) {
  validate_dataset(data);
  return fit_l2(sys, data, gram_matrix(sys, data.times), lambda);
}

inline SplineFit fit_l1(const StateSpace& sys, const DataSet& data, const GramOperator& op,
                        L1Config config) {
  config.weights = data.weights;
  L1Solution sol = solve_l1(op.G, op.H, data.values, config);
  return SplineFit{sys,
                   data.times,
                   std::move(sol.theta),
                   std::move(sol.x0),
                   {FitMode::L1, config.p, config.eta, config.estimate_x0},
                   std::move(sol.report)};
}

inline SplineFit fit_l1(const StateSpace& sys, const DataSet& data, const L1Config& config) {
  validate_dataset(data);
  return fit_l1(sys, data, make_gram_operator(sys, data.times), config);
}

}  // namespace ctspline
