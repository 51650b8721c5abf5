#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace unlbench {

/// Incremental 64-bit FNV-1a, used for config, parameter and centroid fingerprints.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes) noexcept;
  void update(std::string_view text) noexcept;
  void update(std::span<const double> values) noexcept;
  std::uint64_t digest() const noexcept { return state_; }
  /// 16 lowercase hex digits.
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);

}  // namespace unlbench
