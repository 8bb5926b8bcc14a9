#pragma once

// Counter-keyed random streams.
//
// Every random draw in the engine comes from a Stream obtained from an RngKey.
// A key is a 64-bit digest of (master seed, derivation path); children are
// derived by mixing path labels into the parent digest.  Identical paths give
// identical streams regardless of which thread asks or in which order, which is
// what makes filter output independent of the worker count.

#include <array>
#include <cstdint>
#include <limits>

namespace gpomp {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix_pair(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t s = a ^ (b * 0xD6E8FEB86659FD93ULL + 0x2545F4914F6CDD1DULL);
  std::uint64_t z = splitmix64(s);
  return splitmix64(z) ^ a;
}

}  // namespace detail

/// Labels for the first component of a derivation path.  Keeping them distinct
/// guarantees, e.g., that resampling draws never alias propagation draws.
enum class StreamTag : std::uint64_t {
  replicate = 1,
  iteration,
  init,
  process,
  perturb,
  resample,
  measurement,
  enkf_noise,
  swarm,
  evaluation,
  simulation,
  learning,
};

/// xoshiro256** generator; satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed) noexcept {
    std::uint64_t s = seed;
    for (auto& w : state_) w = detail::splitmix64(s);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

/// Position in the stream derivation tree.
class RngKey {
 public:
  constexpr explicit RngKey(std::uint64_t master_seed) noexcept
      : digest_(detail::mix_pair(0x6A09E667F3BCC909ULL, master_seed)) {}

  [[nodiscard]] constexpr RngKey child(std::uint64_t label) const noexcept {
    return RngKey(detail::mix_pair(digest_, label), Raw{});
  }
  [[nodiscard]] constexpr RngKey child(StreamTag tag) const noexcept {
    return child(static_cast<std::uint64_t>(tag));
  }
  template <typename... Rest>
  [[nodiscard]] constexpr RngKey child(StreamTag tag, std::uint64_t first, Rest... rest) const noexcept {
    RngKey k = child(tag).child(first);
    ((k = k.child(static_cast<std::uint64_t>(rest))), ...);
    return k;
  }

  [[nodiscard]] Stream stream() const noexcept { return Stream(digest_); }
  [[nodiscard]] constexpr std::uint64_t digest() const noexcept { return digest_; }

  friend constexpr bool operator==(const RngKey&, const RngKey&) = default;

 private:
  struct Raw {};
  constexpr RngKey(std::uint64_t digest, Raw) noexcept : digest_(digest) {}

  std::uint64_t digest_;
};

}  // namespace gpomp
