#pragma once

#include <cstdint>
#include <random>

namespace multidep {

// Stateless mixing step; used to derive independent substream seeds so that
// replicate k of a run is reproducible regardless of evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(substream_seed(seed, stream)),
                    static_cast<std::uint32_t>(substream_seed(seed, stream) >> 32),
                    static_cast<std::uint32_t>(substream_seed(seed ^ 0x5851f42dULL, stream)),
                    static_cast<std::uint32_t>(substream_seed(seed ^ 0x5851f42dULL, stream) >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace multidep
