#pragma once

#include "ctspline/data_io.hpp"
#include "ctspline/error.hpp"
#include "ctspline/fit.hpp"
#include "ctspline/gramian.hpp"
#include "ctspline/matrix_exponential.hpp"
#include "ctspline/quadrature.hpp"
#include "ctspline/random.hpp"
#include "ctspline/solver_l1.hpp"
#include "ctspline/solver_l2.hpp"
#include "ctspline/spline_eval.hpp"
#include "ctspline/state_space.hpp"
