#include "qcs/random.hpp"

#include <array>

namespace qcs {

namespace {

std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(seeded_engine(seed, stream_id)) {}

double RandomStream::normal(double mean, double sigma) { return mean + sigma * normal_(engine_); }

RandomStream RandomStream::derive(std::uint64_t stream_id) const {
  // splitmix64 finalizer keeps nearby (stream, child) pairs apart.
  return RandomStream(seed_,
                      splitmix64(stream_id_ * 0x9E3779B97F4A7C15ULL + stream_id + 0x632BE59BD9B4E019ULL));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return splitmix64(base + 0x9E3779B97F4A7C15ULL * (index + 1));
}

}  // namespace qcs
