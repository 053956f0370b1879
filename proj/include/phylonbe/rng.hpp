#pragma once

#include <cstdint>
#include <random>

namespace phylonbe {

// splitmix64 finalizer; used to derive independent per-record seeds from a
// base seed and a stream index.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

// Deterministic random stream. mt19937_64 has a standard-mandated output
// sequence; the variate transforms below are written out explicitly because
// the std::*_distribution adapters are implementation-defined and would break
// byte-identical reruns across standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive on both ends.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  double exponential(double rate);

  // Box-Muller without caching the second variate, so the draw count per
  // call is fixed.
  double normal(double mean, double sd);

  double lognormal(double log_mean, double log_sd) {
    return std::exp(normal(log_mean, log_sd));
  }

  // Marsaglia-Tsang; any shape > 0, unit scale.
  double gamma(double shape);

  double beta(double a, double b);

 private:
  std::mt19937_64 gen_;
};

}  // namespace phylonbe
