#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace eid {

/// Deterministic random source. mt19937_64 supplies the bit stream; the
/// uniform/normal helpers are hand-rolled on top of it because the std
/// distributions are implementation-defined and would break run
/// reproducibility across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  uint64_t next_u64() {
    ++draws_;
    return engine_();
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], both ends inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  uint64_t seed() const { return seed_; }
  /// Number of raw draws so far; (seed, draws) identifies the stream state.
  uint64_t draws() const { return draws_; }

  /// Independent child stream, reproducibly derived from (seed, id).
  Rng fork(uint64_t id) const;

 private:
  uint64_t seed_ = 0;
  uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used for seed derivation.
uint64_t mix_u64(uint64_t x);

/// FNV-1a, used to derive stable per-cell seeds from strings.
uint64_t fnv1a(std::string_view s);

}  // namespace eid
