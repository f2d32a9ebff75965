#pragma once

#include <cstdint>
#include <random>

namespace qcs {

/// Seeded pseudo-random stream. Independent streams are derived from one
/// seed by stream id, so quantum, channel and phase-lock draws never share
/// state and can be varied separately.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal(double mean = 0.0, double sigma = 1.0);

  std::uint64_t next_u64() { return engine_(); }

  /// Child stream for an independent sub-task (sweep cell, trial index).
  RandomStream derive(std::uint64_t stream_id) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Seed for the index-th independent child run of `base` (sweep cells,
/// Monte Carlo trials). splitmix64 of base and index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// Stream ids used by the protocol orchestrator.
namespace streams {
inline constexpr std::uint64_t collapse = 0x100;
inline constexpr std::uint64_t alice_sampling = 0x200;
inline constexpr std::uint64_t bob_sampling = 0x300;
inline constexpr std::uint64_t channel = 0x400;
inline constexpr std::uint64_t phase_lock = 0x500;
inline constexpr std::uint64_t medium = 0x600;
}  // namespace streams

}  // namespace qcs
