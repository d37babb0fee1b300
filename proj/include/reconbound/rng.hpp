#pragma once

// Counter-based pseudo-random streams. Each draw hashes (key, counter) with
// the SplitMix64 finalizer, so a stream's output depends only on its key and
// how many values it has produced. Substreams derive fresh keys from ids,
// which lets callers give every (run, step, sample) its own independent
// stream and reproduce any draw without replaying the whole schedule.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "reconbound/tensor.hpp"

namespace reconbound {

namespace detail {
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace detail

class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(detail::mix64(seed ^ 0xA02B0C5AD7F4DB3Dull)) {}

  // Independent child stream. Children with distinct ids, and streams derived
  // through distinct substream chains, never share draw sequences.
  Rng substream(uint64_t id) const {
    Rng child(0);
    child.key_ = detail::mix64(key_ ^ detail::mix64(id + 0x9E3779B97F4A7C15ull));
    child.counter_ = 0;
    child.has_spare_ = false;
    return child;
  }

  uint64_t next_u64() { return detail::mix64(key_ ^ counter_++); }

  // Uniform in [0, 1): top 53 bits of the hash.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the paired value is cached.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    // Guard against log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Tensor gaussian_vector(int64_t n, double stddev = 1.0) {
    Tensor out = Tensor::zeros({n});
    for (int64_t i = 0; i < n; ++i) out[i] = stddev * next_gaussian();
    return out;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n).
  int64_t next_index(int64_t n) {
    if (n <= 0) throw std::invalid_argument("next_index needs n > 0");
    // Rejection-free modulo is fine here: n is tiny relative to 2^64, so the
    // bias is far below statistical resolution of anything we run.
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  // Uniform random B-subset of {0, ..., n-1} via partial Fisher-Yates.
  // Returned in draw order (not sorted).
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t b) {
    if (b < 0 || b > n) throw std::invalid_argument("subset size out of range");
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    std::vector<int64_t> out(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
      const int64_t j = i + next_index(n - i);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      out[static_cast<size_t>(i)] = pool[static_cast<size_t>(i)];
    }
    return out;
  }

 private:
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace reconbound
