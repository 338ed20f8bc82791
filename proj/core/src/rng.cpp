#include "descatter3d/rng.hpp"

#include <cmath>

#include "descatter3d/errors.hpp"

namespace descatter3d {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

// SplitMix64 finalizer: a bijective mix with full avalanche.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng CounterRng::stream(std::uint64_t seed, std::uint64_t stream_id) {
  return CounterRng(mix64(mix64(seed) + kGamma * (stream_id + 1)));
}

CounterRng CounterRng::stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return CounterRng(mix64(mix64(mix64(seed) + kGamma * (a + 1)) + kGamma * (b + 1)));
}

std::uint64_t CounterRng::next_u64() {
  return mix64(key_ + kGamma * ++counter_);
}

double CounterRng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::next_below(std::uint64_t n) {
  // Rejection to avoid modulo bias; the loop almost never iterates.
  const std::uint64_t limit = n * ((~0ull) / n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double CounterRng::next_normal() {
  if (cached_valid_) {
    cached_valid_ = false;
    return cached_normal_;
  }
  double u1, u2;
  do {
    u1 = next_double();
  } while (u1 <= 0.0);
  u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  cached_valid_ = true;
  return r * std::cos(theta);
}

namespace {

std::uint64_t poisson_knuth(double lambda, CounterRng& rng) {
  const double limit = std::exp(-lambda);
  std::uint64_t k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.next_double();
  } while (p > limit);
  return k - 1;
}

// Hormann (1993) PTRS: transformed rejection with squeeze, valid for
// lambda >= 10; we switch at 30 where Knuth's product underflows speed-wise.
std::uint64_t poisson_ptrs(double lambda, CounterRng& rng) {
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);

  for (;;) {
    const double u = rng.next_double() - 0.5;
    const double v = rng.next_double();
    const double us = 0.5 - std::fabs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr) {
      return static_cast<std::uint64_t>(kf);
    }
    if (kf < 0.0 || (us < 0.013 && v > us)) {
      continue;
    }
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        kf * loglam - lambda - std::lgamma(kf + 1.0)) {
      return static_cast<std::uint64_t>(kf);
    }
  }
}

}  // namespace

std::uint64_t poisson_sample(double lambda, CounterRng& rng) {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw InvalidRate("poisson_sample: rate must be finite and >= 0");
  }
  if (lambda == 0.0) {
    return 0;
  }
  if (lambda < 30.0) {
    return poisson_knuth(lambda, rng);
  }
  return poisson_ptrs(lambda, rng);
}

std::uint64_t fnv1a64(const void* data, std::uint64_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint64_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace descatter3d
