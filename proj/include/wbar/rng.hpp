#pragma once

#include <cstdint>

namespace wbar {

/// SplitMix64 generator (Steele, Lea, Flood 2014). The state advances by a
/// fixed increment and each output is a bijective hash of the state, so the
/// stream is effectively counter-based: output i depends only on (seed, i).
/// Replication substreams derived from (seed, index) therefore agree between
/// serial and parallel execution orders.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double strictly inside (0,1): 53-bit mantissa midpoints.
    double next_uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_uniform01();
    }

  private:
    std::uint64_t state_;
};

/// Decorrelates (seed, stream index) into an independent SplitMix64 key.
inline std::uint64_t derive_stream_key(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 h(seed ^ (0xA0761D6478BD642FULL + index * 0xE7037ED1A0B428DBULL));
    h.next_u64();
    return h.next_u64();
}

inline SplitMix64 substream(std::uint64_t seed, std::uint64_t index) {
    return SplitMix64(derive_stream_key(seed, index));
}

}  // namespace wbar
