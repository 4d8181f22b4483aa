#include "eid/rng.hpp"

#include <cmath>

#include "eid/common.hpp"

namespace eid {

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  check(lo <= hi, detail::cat("uniform_int: empty range [", lo, ", ", hi, "]"));
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  // Rejection sampling for an unbiased draw.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + static_cast<int64_t>(x % span);
}

double Rng::normal() {
  // Box-Muller; u1 bounded away from 0 so log is finite.
  double u1 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Rng Rng::fork(uint64_t id) const {
  return Rng(mix_u64(seed_ ^ mix_u64(id + 0x9e3779b97f4a7c15ULL)));
}

uint64_t mix_u64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace eid
