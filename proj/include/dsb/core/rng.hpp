#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dsb {

/// Deterministic random stream identified by (seed, stream id).
///
/// Streams with equal identifiers replay identical sequences. Distinct stream
/// ids are decorrelated by hashing the pair through splitmix64 before seeding
/// the Mersenne Twister engine. All conversions to floating point and to
/// categories are done here rather than through <random> distributions, whose
/// output is implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::size_t below(std::size_t n);
  double normal();

  // Index drawn proportionally to non-negative weights (need not sum to one).
  std::size_t categorical(std::span<const double> weights);
  // Index drawn from log-weights; -inf entries are never chosen.
  std::size_t categorical_log(std::span<const double> log_weights);

  // Derives a child stream, e.g. one per worker or per sample row.
  RngStream split(std::uint64_t child_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dsb
