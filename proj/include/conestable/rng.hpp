#pragma once

#include <cstdint>
#include <random>

#include "conestable/geometry.hpp"

namespace conestable {

/// Reproducible random stream identified by (seed, stream_id).
///
/// Every simulated path owns its own stream, so ensembles give identical
/// results regardless of how paths are scheduled across threads. The engine
/// state is derived from both ids through SplitMix64 finalizers.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_(stream_id), eng_(mix(seed ^ mix(stream_id + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  /// Child stream for a sub-task; deterministic in (seed, stream_id, k).
  RngStream split(std::uint64_t k) const { return {seed_, mix(stream_ ^ mix(k + 0x9e3779b97f4a7c15ULL))}; }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = std::generate_canonical<double, 53>(eng_);
    } while (u <= 0.0);
    return u;
  }
  double normal() { return normal_(eng_); }
  double exponential() { return exp_(eng_); }
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(eng_); }
  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }
  std::uint64_t bits() { return eng_(); }

  /// Uniform direction on S^{d-1}.
  Point unit_vector(int d) {
    Point p(d);
    double n2 = 0.0;
    do {
      for (int i = 0; i < d; ++i) p[i] = normal();
      n2 = p.norm2();
    } while (n2 == 0.0);
    p *= 1.0 / std::sqrt(n2);
    return p;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::exponential_distribution<double> exp_{1.0};
};

}  // namespace conestable
