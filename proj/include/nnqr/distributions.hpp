#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "nnqr/numcore.hpp"

namespace nnqr {

/// Inverse standard normal CDF. Rational approximation (Acklam) followed by one
/// Halley step against the erfc-based CDF; absolute error below 1e-9.
inline double normal_quantile(double u) {
  check_quantile_level(u);
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;

  double x;
  if (u < low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - low) {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement; work with the upper tail in the right half to keep relative accuracy.
  const double pdf_scale = std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  double e;
  if (x <= 0.0) {
    e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - u;
  } else {
    e = (1.0 - u) - 0.5 * std::erfc(x / std::numbers::sqrt2);
  }
  const double step = e * pdf_scale;
  x -= step / (1.0 + 0.5 * x * step);
  return x;
}

/// Inverse CDF of Student's t with 2 degrees of freedom.
inline double t2_quantile(double u) {
  check_quantile_level(u);
  return (2.0 * u - 1.0) * std::sqrt(2.0 / (4.0 * u * (1.0 - u)));
}

enum class ErrorLaw { standard_normal, student_t2 };

inline double error_quantile(ErrorLaw law, double u) {
  return law == ErrorLaw::standard_normal ? normal_quantile(u) : t2_quantile(u);
}

inline std::string to_string(ErrorLaw law) { return law == ErrorLaw::standard_normal ? "normal" : "t2"; }

inline ErrorLaw parse_error_law(const std::string& s) {
  if (s == "normal" || s == "standard_normal") return ErrorLaw::standard_normal;
  if (s == "t2" || s == "student_t2") return ErrorLaw::student_t2;
  detail::invalid("unknown error law '" + s + "' (expected normal or t2)");
}

}  // namespace nnqr
