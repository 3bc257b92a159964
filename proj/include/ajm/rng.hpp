#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace ajm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// mt19937_64 core (bit-exact across platforms per the standard) with explicit
// transforms, since std::*_distribution output is implementation-defined.
// Substreams: child seed = splitmix64(splitmix64(seed) ^ splitmix64(index + 1)).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t raw() { return gen_(); }
  std::uint64_t seed() const { return seed_; }

  Rng substream(std::uint64_t index) const {
    return Rng(splitmix64(splitmix64(seed_) ^ splitmix64(index + 1)));
  }

  // uniform on (0,1)
  double uniform() {
    for (;;) {
      double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double exponential() { return -std::log(uniform()); }

  // polar method; one spare value cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // Marsaglia-Tsang; Gamma(shape, scale 1)
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::domain_error("gamma shape must be positive");
    if (shape < 1.0) {
      double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // inverse gamma with shape a, scale b: density ~ x^{-a-1} exp(-b/x)
  double inv_gamma(double shape, double scale) {
    if (!(scale > 0.0)) throw std::domain_error("inv_gamma scale must be positive");
    return scale / gamma(shape);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ajm
