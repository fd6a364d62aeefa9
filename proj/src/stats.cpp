#include "bhport/stats.hpp"

#include <cmath>
#include <cstddef>
#include <limits>

#include "bhport/errors.hpp"

namespace bhport {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw ConfigError("mean: empty input");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) throw ConfigError("sample_sd: need at least 2 values");
  double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

double ess(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  if (n < 10) throw ConfigError("ess: chain must have at least 10 draws");
  for (double x : chain)
    if (!std::isfinite(x)) throw ConfigError("ess: chain contains non-finite values");

  // A constant chain carries no sampling noise at all; detect it by value
  // rather than via the autocovariance, which picks up rounding residue from
  // the mean subtraction when the common value is not exactly representable.
  bool constant = true;
  for (double x : chain) {
    if (x != chain.front()) {
      constant = false;
      break;
    }
  }
  if (constant) return static_cast<double>(n);

  double m = mean(chain);
  std::vector<double> centered(n);
  for (std::size_t t = 0; t < n; ++t) centered[t] = chain[t] - m;

  // Autocovariance at lag k, 1/n normalization.
  auto gamma_at = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += centered[t] * centered[t + k];
    return s / static_cast<double>(n);
  };

  double c0 = gamma_at(0);
  if (c0 == 0.0) return static_cast<double>(n);  // constant chain is exact

  // Sum of adjacent-pair autocorrelations Gamma_m = rho_{2m} + rho_{2m+1},
  // kept while positive and forced nonincreasing.
  double pair_sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t mlag = 0; 2 * mlag + 1 < n; ++mlag) {
    double pair = (gamma_at(2 * mlag) + gamma_at(2 * mlag + 1)) / c0;
    if (pair <= 0.0) break;
    if (pair > prev_pair) pair = prev_pair;
    pair_sum += pair;
    prev_pair = pair;
  }

  double iact = 2.0 * pair_sum - 1.0;
  if (iact < 1e-12) iact = 1e-12;
  double result = static_cast<double>(n) / iact;
  return result < 1.0 ? 1.0 : result;
}

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw ConfigError("normal_quantile: p must lie in (0, 1)");
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    double num =
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
              6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
            1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
            3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
          4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
          2.05319162663775882187e+0) * r + 1.0);
    value = num / den;
  } else {
    r -= 5.0;
    double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    value = num / den;
  }
  return q < 0.0 ? -value : value;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double z_for_level(double level) {
  if (!(level > 0.0) || !(level < 1.0))
    throw ConfigError("z_for_level: level must lie in (0, 1)");
  if (std::fabs(level - 0.95) < 1e-12) return 1.96;
  return normal_quantile(0.5 * (1.0 + level));
}

}  // namespace bhport
