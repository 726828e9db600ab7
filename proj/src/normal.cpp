#include "onestep/normal.hpp"

#include <cmath>
#include <numbers>

#include "onestep/errors.hpp"

namespace onestep {

double normal_cdf(double x) {
  if (std::isnan(x)) throw Error(Errc::domain, "normal_cdf of NaN");
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

namespace {

// Acklam's rational approximation, relative error about 1e-9; refined below.
double quantile_guess(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::domain, "normal_quantile needs p in (0, 1)");
  if (p == 0.5) return 0.0;

  // Newton steps safeguarded by a bracket that always contains the root.
  double lo = -40.0;
  double hi = 40.0;
  double q = quantile_guess(p);
  for (int it = 0; it < 100; ++it) {
    const double f = normal_cdf(q) - p;
    if (f == 0.0) break;
    if (f < 0.0) lo = q; else hi = q;
    const double pdf = std::exp(-0.5 * q * q) / std::sqrt(2.0 * std::numbers::pi);
    double next = q - f / pdf;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - q) <= 1e-15 * (1.0 + std::abs(q))) {
      q = next;
      break;
    }
    q = next;
  }
  return q;
}

}  // namespace onestep
