#include "denstree/normal.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <numbers>

namespace denstree::normal {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
}

double log_pdf(double z) { return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi); }

double cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double interval_mass(double a, double b) {
  if (a > 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b < 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 1.0 - 0.5 * std::erfc(-a * kInvSqrt2) - 0.5 * std::erfc(b * kInvSqrt2);
}

double quantile(double p) {
  p = std::clamp(p, 1e-300, 1.0 - 1e-16);
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double sample_truncated(double mean, double sd, double lo, double hi, Rng& rng) {
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;
  const double u = uniform01(rng);
  double z;
  if (a > 0.0) {
    // upper tail: sample through survival function to keep precision
    const double sa = 0.5 * std::erfc(a * kInvSqrt2);
    const double sb = 0.5 * std::erfc(b * kInvSqrt2);
    z = -quantile(sb + u * (sa - sb));
  } else {
    const double fa = cdf(a);
    const double fb = cdf(b);
    z = quantile(fa + u * (fb - fa));
  }
  return std::clamp(mean + sd * z, lo, hi);
}

}  // namespace denstree::normal
