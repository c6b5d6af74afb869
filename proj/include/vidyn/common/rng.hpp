#pragma once

#include <array>
#include <cstdint>

namespace vidyn {

// One Philox4x32-10 block: 4 output words from a 128-bit counter and 64-bit
// key. Exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

// Counter-based Philox4x32-10 stream (Salmon et al., "Parallel random numbers:
// as easy as 1, 2, 3"). A stream is addressed by (key, stream id); draws from
// different stream ids are independent and any stream can be recreated from
// its address alone, so per-trajectory / per-sample generators never depend on
// generation order.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t key, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; consumes two uniforms per pair, caches the
  // second value so consumption is deterministic.
  double normal();
  // Uniform integer on [0, n). The modulo bias is below n / 2^64.
  std::size_t index(std::size_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_;
  std::array<std::uint32_t, 4> block_;
  int block_pos_;
  double cached_normal_;
  bool has_cached_normal_;
};

// Domain tags keep independent uses of the same master seed on disjoint
// streams. The stream id packs (domain, index) so ids never collide.
enum class RngDomain : std::uint64_t {
  kParams = 1,
  kForcing = 2,
  kNoise = 3,
  kInit = 4,
  kTrainSample = 5,
  kTrainEps = 6,
  kValWindows = 7,
  kValEps = 8,
  kOneStep = 9,
  kForecast = 10,
  kTest = 11,
  kLatent = 12,
};

RngStream make_stream(std::uint64_t seed, RngDomain domain, std::uint64_t index = 0);

// 64-bit mixing (splitmix64 finalizer); used to spread composite stream ids.
std::uint64_t mix64(std::uint64_t x);

}  // namespace vidyn
