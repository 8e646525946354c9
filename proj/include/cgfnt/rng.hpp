#pragma once

// Reproducible random streams.
//
// Every Monte Carlo loop in the library draws from a Stream keyed by
// (master seed, stream index). The index is the replication number (or a
// fixed block number for long draws), so the draws seen by replication s are
// the same no matter how the replications are scheduled across threads.

#include <cmath>
#include <cstdint>
#include <random>

#include <boost/math/distributions/normal.hpp>

namespace cgfnt {

/// SplitMix64 finalizer; used to decorrelate (seed, index) pairs.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed for substream `index` of `seed`.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Domain tags so that different consumers of one master seed never share
/// substreams.
enum class StreamTag : std::uint64_t {
  kPoints = 0x01,
  kNullReplication = 0x02,
  kPowerReplication = 0x03,
  kSampleBlock = 0x04,
  kVerify = 0x05,
  kCompetitorNull = 0x06,
  kFallback = 0x07,
};

constexpr std::uint64_t tagged_seed(std::uint64_t seed, StreamTag tag) noexcept {
  return mix64(seed ^ (static_cast<std::uint64_t>(tag) << 56));
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}
  Stream(std::uint64_t seed, std::uint64_t index) : engine_(substream_seed(seed, index)) {}

  /// Uniform on the open interval (0, 1), 53 random bits.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal by inversion, so every platform with IEEE doubles and
  /// the same Boost release produces identical draws.
  double normal() {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, uniform());
  }

  double exponential() { return -std::log(uniform()); }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cgfnt
