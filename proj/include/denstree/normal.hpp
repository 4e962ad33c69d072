#pragma once

#include "denstree/random.hpp"

namespace denstree::normal {

double log_pdf(double z);  // standard normal
double cdf(double z);

/// Phi(b) - Phi(a) for a <= b, computed from the tail that keeps precision.
double interval_mass(double a, double b);

double quantile(double p);

/// Draw from N(mean, sd^2) truncated to [lo, hi] by inverse CDF.
double sample_truncated(double mean, double sd, double lo, double hi, Rng& rng);

}  // namespace denstree::normal
