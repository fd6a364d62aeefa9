#pragma once

#include <cstdint>
#include <random>

namespace bhport {

// Deterministic random stream: identical (seed, stream_id) produces identical
// variate sequences on every platform. The engine is std::mt19937_64, whose
// output sequence is fixed by the standard; all distribution transforms are
// implemented here because std::*_distribution algorithms are
// implementation-defined. A stream must not be shared across threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();

  // Uniform on (0, 1].
  double uniform();

  // Uniform on [lo, hi].
  double uniform(double lo, double hi);

  // Standard normal via the Marsaglia polar method (sqrt/log only).
  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
  double gamma(double shape);

  // Chi-square with df degrees of freedom (df > 0, not necessarily integer).
  double chi_square(double df);

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bhport
