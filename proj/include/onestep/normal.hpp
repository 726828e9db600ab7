#pragma once

namespace onestep {

/// Standard normal distribution function.
double normal_cdf(double x);

/// Inverse of normal_cdf on (0, 1); DomainError outside.
double normal_quantile(double p);

}  // namespace onestep
