#pragma once

#include <cstdint>
#include <random>

namespace tgauge {

/// Seeded random stream. The pair (seed, stream id) fully determines the
/// sequence; the engine and the normal transform are both specified here
/// rather than left to the standard library's distributions, whose output is
/// implementation-defined.
///
/// Not thread-safe: give each task its own stream.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via the Marsaglia polar method.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tgauge
