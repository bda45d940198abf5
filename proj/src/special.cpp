#include "pathfx/special.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <stdexcept>

namespace pathfx {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p outside (0,1)");
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * p);
}

double student_t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("student_t_quantile: p outside (0,1)");
  if (!(df > 0.0)) throw std::domain_error("student_t_quantile: df must be positive");
  return boost::math::quantile(boost::math::students_t(df), p);
}

}  // namespace pathfx
