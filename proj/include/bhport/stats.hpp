#pragma once

#include <vector>

namespace bhport {

// Effective sample size n / (1 + 2*sum rho_k), with the autocorrelation sum
// truncated by Geyer's initial monotone positive sequence. Not capped above
// (an antithetic chain can legitimately exceed n); floored at 1. A constant
// chain returns n; NaN input throws.
double ess(const std::vector<double>& chain);

// Standard normal inverse CDF (Wichura's rational approximation, ~1e-15).
double normal_quantile(double p);

// Standard normal CDF.
double normal_cdf(double x);

// Two-sided z multiplier for a central interval at `level`; exactly 1.96 for
// level 0.95, the exact quantile otherwise.
double z_for_level(double level);

double mean(const std::vector<double>& xs);

// Sample standard deviation (n-1 denominator).
double sample_sd(const std::vector<double>& xs);

}  // namespace bhport
