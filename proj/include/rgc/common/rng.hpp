#pragma once

#include <cstdint>
#include <cstddef>
#include <random>
#include <utility>
#include <vector>

namespace rgc {

/// Seeded generator passed explicitly to everything that needs randomness.
/// The engine is std::mt19937_64; the mappings to real/normal/integer values
/// are written out here so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one draw discarded for simplicity).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool coin() { return (engine_() >> 63) != 0; }

  /// Fisher-Yates with below(), so the order is library-independent.
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0);

}  // namespace rgc
