#pragma once

#include <cstdint>
#include <random>

namespace cxr {

// Deterministic random stream. Wraps mt19937_64 (whose raw output is pinned
// by the standard) with hand-rolled distributions, so draws are reproducible
// across platforms and independent of libstdc++ internals.
//
// Streams are derived from a (seed, streamId) pair; every stochastic site in
// the project owns its stream, which keeps results independent of evaluation
// order and worker scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), base_(seed) {}

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

  // Independent stream derived from a base seed and a stream id.
  static Rng stream(std::uint64_t seed, std::uint64_t streamId) {
    return Rng(mix(seed, streamId));
  }

  // Child stream keyed off this stream's base seed; does not consume state.
  Rng fork(std::uint64_t streamId) const { return Rng(mix(base_, streamId)); }

  std::uint64_t u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi], inclusive. Unbiased via rejection.
  std::int64_t uniformInt(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller; pair cached.
  double normal();
  double normal(double mu, double sigma) { return mu + sigma * normal(); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t base_ = 0;
  bool hasSpare_ = false;
  double spare_ = 0.0;
};

}  // namespace cxr
