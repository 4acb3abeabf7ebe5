#include "gnfeat/prng.hpp"

#include <cmath>
#include <numbers>

namespace gnfeat {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter c, Key k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

GaussianStream::GaussianStream(std::uint64_t seed, std::string_view label)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(fnv1a64(label)) {}

double GaussianStream::operator()(std::uint64_t index) const {
  const std::uint64_t block = index / 2;
  const Philox4x32::Counter out = Philox4x32::generate(
      {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
       static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
      key_);
  const std::uint64_t a = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  const std::uint64_t b = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  const double u1 = static_cast<double>((a >> 11) + 1) * kTwoPow53Inv;  // (0, 1]
  const double u2 = static_cast<double>(b >> 11) * kTwoPow53Inv;        // [0, 1)
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return (index % 2 == 0) ? r * std::cos(theta) : r * std::sin(theta);
}

double GaussianStream::uniform(std::uint64_t index) const {
  const Philox4x32::Counter out = Philox4x32::generate(
      {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
       static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
      key_);
  const std::uint64_t a = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  return static_cast<double>(a >> 11) * kTwoPow53Inv;
}

}  // namespace gnfeat
