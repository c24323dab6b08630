#pragma once

namespace burgers {

/// Standard normal density.
double normal_pdf(double x);

/// Standard normal distribution function.
double normal_cdf(double x);

/// Inverse of normal_cdf on (0, 1), Wichura's AS241 (PPND16). Relative error
/// is around 1e-16 across the whole open interval. Throws std::domain_error
/// outside (0, 1).
double normal_quantile(double p);

}  // namespace burgers
