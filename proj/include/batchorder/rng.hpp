#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace batchorder {

/// Consumers of randomness. Each gets its own Philox stream so that, for
/// example, an attacked run and its baseline share initialization and data
/// generation while differing only in ordering.
enum class Stream : std::uint32_t {
  data = 1,
  init = 2,
  shuffle = 3,
  augment = 4,
  candidates = 5,
  attack = 6,
  monte_carlo = 7,
  trigger_pick = 8,
  surrogate_init = 9,
};

/// Stream id for the `index`-th sub-stream of a consumer (e.g. one per epoch).
constexpr std::uint64_t stream_id(Stream s, std::uint64_t index = 0) noexcept {
  return (static_cast<std::uint64_t>(s) << 40) ^ index;
}

/// Philox4x32-10 counter-based generator.
///
/// The (seed, stream) pair forms the key/counter-high words; a 64-bit block
/// counter advances per 128-bit output block. Output depends only on integer
/// arithmetic, so identical (seed, stream) give identical sequences everywhere.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box–Muller.
  double normal() noexcept;
  /// Uniform integer in [0, n), unbiased. n must be positive.
  std::size_t index(std::size_t n) noexcept;

  template <class T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  /// k distinct values from [0, n) in random order (partial Fisher–Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                             std::array<std::uint32_t, 2> key) noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  unsigned used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace batchorder
