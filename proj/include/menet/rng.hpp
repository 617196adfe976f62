#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace menet {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014). Bijective on 64 bits.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive an independent stream key from a parent key and a stream index.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return mix64(parent ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Counter-based generator: output i is mix64(key + i * golden_gamma).
///
/// Random access through `at(i)` lets a mask entry be a pure function of
/// (seed, index), which makes every sampled object reproducible bit-for-bit
/// regardless of platform or evaluation order. Distribution transforms are
/// written out here rather than taken from <random>, whose distributions are
/// implementation-defined.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

  constexpr std::uint64_t at(std::uint64_t counter) const {
    return mix64(key_ + counter * 0x9e3779b97f4a7c15ULL);
  }

  constexpr std::uint64_t next_u64() { return at(counter_++); }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() { return to_unit(next_u64()); }
  constexpr double uniform_at(std::uint64_t counter) const { return to_unit(at(counter)); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses the multiply-shift reduction.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; one draw per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// +1 or -1 with equal probability.
  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  std::uint64_t key() const { return key_; }

 private:
  static constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace menet
