#pragma once

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ctspline/error.hpp"

namespace ctspline {

namespace detail {

// Padé coefficients b_0..b_m for the [m/m] approximant of exp, and the
// 1-norm bounds up to which each degree is accurate to unit roundoff.
inline constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
inline constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0,
                                                 420.0,   30.0,    1.0};
inline constexpr std::array<double, 8> kPade7 = {
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0};
inline constexpr std::array<double, 10> kPade9 = {
    17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
    2162160.0,     110880.0,     3960.0,       90.0,        1.0};
inline constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};

inline constexpr double kTheta3 = 1.495585217958292e-2;
inline constexpr double kTheta5 = 2.539398330063230e-1;
inline constexpr double kTheta7 = 9.504178996162932e-1;
inline constexpr double kTheta9 = 2.097847961257068e0;
inline constexpr double kTheta13 = 5.371920351148152e0;

// Low-degree approximant (m <= 9): U holds the odd part, V the even part.
template <std::size_t K>
Eigen::MatrixXd pade_low(const Eigen::MatrixXd& a,
                         const std::array<double, K>& coef) {
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd a2 = a * a;
  Eigen::MatrixXd power = ident;
  Eigen::MatrixXd odd = coef[1] * ident;
  Eigen::MatrixXd even = coef[0] * ident;
  for (std::size_t k = 2; k + 1 < K; k += 2) {
    power = power * a2;
    even += coef[k] * power;
    odd += coef[k + 1] * power;
  }
  const Eigen::MatrixXd u = a * odd;
  return (even - u).partialPivLu().solve(even + u);
}

inline Eigen::MatrixXd pade13(const Eigen::MatrixXd& a) {
  const auto& b = kPade13;
  const Eigen::Index n = a.rows();
  const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd a2 = a * a;
  const Eigen::MatrixXd a4 = a2 * a2;
  const Eigen::MatrixXd a6 = a4 * a2;
  const Eigen::MatrixXd u =
      a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 +
           b[5] * a4 + b[3] * a2 + b[1] * ident);
  const Eigen::MatrixXd v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) +
                            b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace detail

/// Matrix exponential by scaling and squaring with a Padé approximant whose
/// degree (3, 5, 7, 9 or 13) is picked from the 1-norm of the input.
inline Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorKind::DimensionMismatch,
                "matrix_exponential needs a square matrix, got " +
                    std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  if (!m.allFinite()) {
    throw Error(ErrorKind::NonFinite, "matrix_exponential input has NaN/Inf");
  }
  if (m.size() == 0) return m;

  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  if (norm1 <= detail::kTheta3) return detail::pade_low(m, detail::kPade3);
  if (norm1 <= detail::kTheta5) return detail::pade_low(m, detail::kPade5);
  if (norm1 <= detail::kTheta7) return detail::pade_low(m, detail::kPade7);
  if (norm1 <= detail::kTheta9) return detail::pade_low(m, detail::kPade9);

  int squarings = 0;
  if (norm1 > detail::kTheta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / detail::kTheta13)));
  }
  Eigen::MatrixXd result = detail::pade13(m * std::ldexp(1.0, -squarings));
  for (int k = 0; k < squarings; ++k) result = result * result;
  return result;
}

}  // namespace ctspline
