#pragma once

#include <cstdint>
#include <initializer_list>

namespace wtpgd {

/// Deterministic random stream identified by (seed, stream-id).
///
/// The generator is a SplitMix64 sequence keyed by both identifiers and the
/// uniform/normal transforms are implemented here rather than taken from
/// <random>, whose distributions are not specified bit-for-bit across
/// standard libraries. Copying an Rng copies its position: both copies then
/// produce the same sequence, which is how probe evaluations hold noise fixed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent child stream keyed by `key`. Does not advance this stream.
  Rng derive(std::uint64_t key) const;
  Rng derive(std::initializer_list<std::uint64_t> keys) const;
  /// Same seed, stream-id + 1.
  Rng next_stream() const { return Rng(seed_, stream_ + 1); }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Marsaglia polar method).
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace wtpgd
