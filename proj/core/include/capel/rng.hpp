#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace capel {

/// xoshiro256** seeded through splitmix64.
///
/// The 64-bit output stream depends only on the seed, so it is identical on
/// every platform. Doubles take the top 53 bits of a draw. Gaussians use the
/// Box-Muller transform on two uniform draws (u1 in (0,1], u2 in [0,1)) and
/// cache the second variate; their last bit follows the platform libm.
///
/// One Rng per owner; instances are not thread-safe.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, bound), unbiased (rejection on the low range).
  std::uint64_t uniform_index(std::uint64_t bound);
  /// Standard normal.
  double gaussian();

  /// Unbiased Fisher-Yates permutation in place.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// k distinct indices from [0, population), in draw order.
  /// Throws InvalidArgument when k > population.
  std::vector<std::size_t> choose_k(std::size_t population, std::size_t k);

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Sub-seed for a named stage ("split", "shuffle", ...): splitmix64 of
/// master XOR FNV-1a(tag). One master seed reproduces a whole run.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace capel
