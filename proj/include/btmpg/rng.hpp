#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>

namespace btmpg {

// Deterministic random source. All distributions are derived from the raw
// mt19937_64 stream by hand so that a given seed produces the same draw
// sequence on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * kInv53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; caches the second deviate.
  double gaussian();

  // Gumbel(0, 1), g = -log(-log u) with u clipped away from {0, 1}.
  double gumbel();

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// The Gumbel transform on its own, exposed for tests of the mapping.
double gumbel_from_uniform(double u);

}  // namespace btmpg
