#include "unlbench/rng.hpp"

#include <cmath>
#include <numbers>

namespace unlbench {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStreamSalt = 0xD1B54A32D192ED03ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(a) ^ (b * kStreamSalt + 0x632BE59BD9B4E019ULL));
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream) noexcept
    : seed_(seed), stream_(stream), key_(mix64(seed) ^ mix64(stream ^ kStreamSalt)) {}

std::uint64_t SeededRng::next_u64() noexcept {
  const std::uint64_t c = counter_++;
  return mix64(key_ + c * kGolden) ^ mix64(c ^ key_);
}

double SeededRng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::uniform_index(std::uint64_t n) noexcept {
  // Reject the 2^64 mod n lowest words so r % n is exactly uniform.
  const std::uint64_t threshold = (std::uint64_t{0} - n) % n;
  std::uint64_t r = next_u64();
  while (r < threshold) r = next_u64();
  return r % n;
}

double SeededRng::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SeededRng SeededRng::derive(std::uint64_t child) const noexcept {
  return SeededRng(seed_, derive_seed(stream_ + 1, child));
}

}  // namespace unlbench
