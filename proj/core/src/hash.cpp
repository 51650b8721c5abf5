#include "unlbench/hash.hpp"

#include <bit>

namespace unlbench {

namespace {
constexpr std::uint64_t kPrime = 0x100000001b3ULL;
}

void Fnv1a::update(std::span<const std::uint8_t> bytes) noexcept {
  for (auto b : bytes) {
    state_ ^= b;
    state_ *= kPrime;
  }
}

void Fnv1a::update(std::string_view text) noexcept {
  for (char c : text) {
    state_ ^= static_cast<std::uint8_t>(c);
    state_ *= kPrime;
  }
}

void Fnv1a::update(std::span<const double> values) noexcept {
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      state_ ^= static_cast<std::uint8_t>(bits >> (8 * i));
      state_ *= kPrime;
    }
  }
}

std::string Fnv1a::hex() const { return hex64(state_); }

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace unlbench
