#ifndef PATHFX_SPECIAL_HPP
#define PATHFX_SPECIAL_HPP

#include <cmath>

namespace pathfx {

// Link-function helpers, templated on the scalar so they also apply to Eigen
// array expressions via unaryExpr.

template <typename Scalar>
Scalar expit(Scalar x) {
  // Split by sign so exp never overflows and expit(x) + expit(-x) rounds to 1.
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar z = std::exp(x);
  return z / (Scalar(1) + z);
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p) - std::log1p(-p);
}

/// Standard normal CDF through the C library's erfc, accurate to a few ulp over the
/// whole line (well inside 1e-12 absolute).
template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x * Scalar(M_SQRT1_2));
}

template <typename Scalar>
Scalar normal_pdf(Scalar x) {
  return std::exp(Scalar(-0.5) * x * x) * Scalar(0.5 * M_2_SQRTPI * M_SQRT1_2);
}

/// Inverse standard normal CDF (Boost.Math erfc_inv).
double normal_quantile(double p);

/// Quantile of Student's t with `df` degrees of freedom (Boost.Math incomplete-beta inversion).
double student_t_quantile(double p, double df);

}  // namespace pathfx

#endif  // PATHFX_SPECIAL_HPP
