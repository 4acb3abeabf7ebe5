#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace gnfeat {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123). Each
/// (key, counter) pair maps to four independent 32-bit words; no state is
/// carried between calls.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key);
};

/// 64-bit FNV-1a, used for stream labels and file checksums.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// A named stream of standard normal draws addressed by index.
///
/// Draw k uses counter block k/2: the block's two 64-bit halves feed one
/// Box-Muller pair, lane 0 taking the cosine branch and lane 1 the sine
/// branch. The value depends only on (seed, label, k).
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::string_view label);

  double operator()(std::uint64_t index) const;

  /// Uniform in [0, 1) from the first 53 bits of block `index`.
  double uniform(std::uint64_t index) const;

 private:
  Philox4x32::Key key_;
  std::uint64_t stream_;
};

}  // namespace gnfeat
