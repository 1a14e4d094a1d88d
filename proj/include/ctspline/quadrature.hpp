#pragma once

#include <array>
#include <cmath>
#include <queue>
#include <string>
#include <vector>

#include "ctspline/error.hpp"

namespace ctspline {

namespace detail {

// 15-point Kronrod abscissae (nonnegative half) and weights, with the
// embedded 7-point Gauss weights on the odd-indexed abscissae.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double lo;
  double hi;
  double value;
  double error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

template <class F>
Panel gauss_kronrod_15(F& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  double kronrod = kKronrodWeights[7] * fc;
  double gauss = kGaussWeights[3] * fc;
  for (int k = 0; k < 7; ++k) {
    const double dx = half * kKronrodNodes[k];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[k] * sum;
    if (k % 2 == 1) gauss += kGaussWeights[k / 2] * sum;
  }
  return {lo, hi, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (7/15) integration of f over [lo, hi].
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops to abs_tol; exceeding max_panels throws.
template <class F>
double integrate_adaptive(F&& f, double lo, double hi, double abs_tol,
                          std::size_t max_panels = 1'000'000) {
  if (!(abs_tol > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "quadrature tolerance must be > 0");
  }
  if (hi <= lo) return 0.0;

  std::priority_queue<detail::Panel> panels;
  panels.push(detail::gauss_kronrod_15(f, lo, hi));
  double total = panels.top().value;
  double error = panels.top().error;
  while (error > abs_tol) {
    if (panels.size() >= max_panels) {
      throw Error(ErrorKind::QuadratureNonConvergence,
                  "error estimate " + std::to_string(error) + " > " +
                      std::to_string(abs_tol) + " after " +
                      std::to_string(panels.size()) + " panels");
    }
    const detail::Panel worst = panels.top();
    panels.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (!(mid > worst.lo && mid < worst.hi)) {
      throw Error(ErrorKind::QuadratureNonConvergence,
                  "panel width reached machine precision");
    }
    const detail::Panel left = detail::gauss_kronrod_15(f, worst.lo, mid);
    const detail::Panel right = detail::gauss_kronrod_15(f, mid, worst.hi);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    panels.push(left);
    panels.push(right);
  }
  // Re-sum to shed the drift from incremental updates.
  total = 0.0;
  while (!panels.empty()) {
    total += panels.top().value;
    panels.pop();
  }
  return total;
}

}  // namespace ctspline
