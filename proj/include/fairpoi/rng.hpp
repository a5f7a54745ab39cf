#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fairpoi {

// SplitMix64 (Steele, Lea, Flood 2014). All synthetic-data sampling goes
// through this generator so that a given seed produces identical datasets on
// every platform; std::* distributions are implementation-defined and are
// deliberately not used.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  // Poisson by inversion; large means are split into chunks so the running
  // product never underflows.
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::uint64_t total = 0;
    while (mean > 500.0) {
      total += poisson_small(500.0);
      mean -= 500.0;
    }
    return total + poisson_small(mean);
  }

  // Index into a discrete distribution given its inclusive prefix sums.
  std::size_t pick_prefix(const std::vector<double>& prefix) {
    const double u = next_double() * prefix.back();
    std::size_t lo = 0, hi = prefix.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (prefix[mid] <= u) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

 private:
  std::uint64_t poisson_small(double mean) {
    const double limit = std::exp(-mean);
    double p = 1.0;
    std::uint64_t k = 0;
    do {
      ++k;
      p *= next_double();
    } while (p > limit);
    return k - 1;
  }

  std::uint64_t state_;
};

}  // namespace fairpoi
