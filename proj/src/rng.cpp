#include "bhport/rng.hpp"

#include <cmath>

#include "bhport/errors.hpp"

namespace bhport {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t state = seed;
  std::uint64_t a = splitmix64(state);
  state ^= stream_id * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL;
  std::uint64_t b = splitmix64(state);
  gen_.seed(a ^ (b + 0x2545F4914F6CDD1DULL));
}

std::uint64_t RngStream::next_u64() { return gen_(); }

double RngStream::uniform() {
  // 53-bit mantissa, shifted into (0, 1] so log(u) is always finite.
  return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw ConfigError("gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost: X ~ Gamma(shape+1), U^(1/shape) scaling recovers Gamma(shape).
    double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::chi_square(double df) {
  if (!(df > 0.0)) throw ConfigError("chi_square: df must be positive");
  return 2.0 * gamma(0.5 * df);
}

}  // namespace bhport
