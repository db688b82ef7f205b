#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace asl {

/// xoshiro256** seeded through SplitMix64 (period 2^256 - 1).
///
/// Streams are platform independent: only integer arithmetic feeds the state,
/// and floats are built from the top mantissa bits. fork() derives a child
/// stream from the seed this generator was *created* with, not from its
/// current position, so consumers keyed by name ("init", "dropout", ...) never
/// perturb one another regardless of how much each has drawn.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double next_double() noexcept;
  /// Uniform on [0, 1) with 24 random bits.
  float next_float() noexcept;
  /// Unbiased integer in [0, bound). bound must be >= 1.
  std::uint64_t below(std::uint64_t bound) noexcept;

  Rng fork(std::string_view key) const noexcept;
  Rng fork(std::uint64_t key) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

  /// Fisher-Yates with below(); std::shuffle is implementation defined.
  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_;
};

}  // namespace asl
