#include "vidyn/common/rng.hpp"

#include <cmath>

namespace vidyn {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::uint32_t mulhi32(std::uint32_t a, std::uint32_t b) {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(a) * b) >> 32);
}

inline std::uint32_t mullo32(std::uint32_t a, std::uint32_t b) {
  return a * b;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint32_t hi0 = mulhi32(kPhiloxM0, ctr[0]);
    const std::uint32_t lo0 = mullo32(kPhiloxM0, ctr[0]);
    const std::uint32_t hi1 = mulhi32(kPhiloxM1, ctr[2]);
    const std::uint32_t lo1 = mullo32(kPhiloxM1, ctr[2]);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

RngStream::RngStream(std::uint64_t key, std::uint64_t stream)
    : key_(key),
      stream_(stream),
      counter_(0),
      block_{},
      block_pos_(4),
      cached_normal_(0.0),
      has_cached_normal_(false) {}

void RngStream::refill() {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(counter_),
      static_cast<std::uint32_t>(counter_ >> 32),
      static_cast<std::uint32_t>(stream_),
      static_cast<std::uint32_t>(stream_ >> 32),
  };
  const std::array<std::uint32_t, 2> key = {
      static_cast<std::uint32_t>(key_),
      static_cast<std::uint32_t>(key_ >> 32),
  };
  block_ = philox4x32_10(ctr, key);
  block_pos_ = 0;
  ++counter_;
}

std::uint32_t RngStream::next_u32() {
  if (block_pos_ >= 4) refill();
  return block_[block_pos_++];
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t lo = next_u32();
  const std::uint64_t hi = next_u32();
  return (hi << 32) | lo;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // u1 on (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

std::size_t RngStream::index(std::size_t n) {
  return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream make_stream(std::uint64_t seed, RngDomain domain, std::uint64_t index) {
  const std::uint64_t id =
      mix64((static_cast<std::uint64_t>(domain) << 48) ^ index);
  return RngStream(seed, id);
}

}  // namespace vidyn
