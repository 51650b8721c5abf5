#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace unlbench {

/// SplitMix64 finalizer. Bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Combines two words into a new seed; order-sensitive.
std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) noexcept;

/// Counter-based generator: the i-th output is a keyed hash of (seed, stream, i),
/// so sequences depend only on integer arithmetic and are identical on every platform.
/// Child streams are obtained with derive(); a generator is single-owner.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t position() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller; one variate per call.
  double normal() noexcept;

  /// Independent child stream keyed by `child`.
  SeededRng derive(std::uint64_t child) const noexcept;

  template <typename T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace unlbench
