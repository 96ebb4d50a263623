#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace ems {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id);

// Named stream identifiers. A run seed is split into one independent stream
// per consumer so that adding or removing a consumer never shifts the draws
// seen by another one.
enum class RngStream : std::uint64_t {
  kAgentA = 1,
  kAgentB = 2,
  kAutomaton = 3,
  kCycleNoise = 4,
};

// Seedable generator with bit-reproducible output on every platform.
//
// std::mt19937_64 is fully specified by the standard, but the std::*
// distributions are not, so the two draws used by the learners are
// implemented here directly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Stream `id` derived from `seed` through SplitMix64 mixing.
  static Rng stream(std::uint64_t seed, std::uint64_t id) { return Rng(derive_seed(seed, id)); }
  static Rng stream(std::uint64_t seed, RngStream id) {
    return stream(seed, static_cast<std::uint64_t>(id));
  }

  /// Uniform double on the half-open interval [0, 1), 53-bit resolution.
  double uniform();

  /// Uniform integer on [0, n). n must be positive.
  std::size_t index(std::size_t n);

  std::uint64_t next() { return engine_(); }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};


}  // namespace ems
