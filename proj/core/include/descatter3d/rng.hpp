#pragma once

#include <cstdint>

namespace descatter3d {

// Counter-based random stream: the i-th output is a pure function of
// (key, i), so independent streams keyed by (seed, stream id) produce the
// same draws no matter how work is scheduled across threads. State is two
// words and trivially serializable for exact resume.
class CounterRng {
 public:
  CounterRng() : CounterRng(0) {}
  explicit CounterRng(std::uint64_t key) : key_(key), counter_(0) {}

  // Derives an independent stream, e.g. one per z-plane or per train step.
  static CounterRng stream(std::uint64_t seed, std::uint64_t stream_id);
  static CounterRng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double next_double();
  // Uniform integer in [0, n), n > 0.
  std::uint64_t next_below(std::uint64_t n);
  // Standard normal via Box-Muller (consumes two uniforms per pair).
  double next_normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; cached_valid_ = false; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  double cached_normal_ = 0.0;
  bool cached_valid_ = false;
};

// Poisson-distributed count for rate lambda >= 0. Knuth multiplication
// below 30, Hormann's PTRS transformed rejection at 30 and above.
// Throws InvalidRate for negative or non-finite lambda.
std::uint64_t poisson_sample(double lambda, CounterRng& rng);

// 64-bit FNV-1a over a byte buffer; used for provenance records.
std::uint64_t fnv1a64(const void* data, std::uint64_t n);

}  // namespace descatter3d
