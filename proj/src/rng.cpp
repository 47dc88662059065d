#include "btmpg/rng.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace btmpg {

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

double gumbel_from_uniform(double u) {
  if (u < 1e-20) u = 1e-20;
  if (u > 1.0 - 1e-16) u = 1.0 - 1e-16;
  return -std::log(-std::log(u));
}

double Rng::gumbel() { return gumbel_from_uniform(uniform()); }

void Rng::save(std::ostream& os) const {
  os << engine_ << '\n' << (has_cached_ ? 1 : 0) << ' ' << cached_ << '\n';
}

void Rng::load(std::istream& is) {
  is >> engine_;
  int flag = 0;
  is >> flag >> cached_;
  has_cached_ = flag != 0;
}

}  // namespace btmpg
