#pragma once

#include <cstdint>
#include <random>

namespace ital {

using Rng = std::mt19937_64;

/// Independent random streams derived from one master seed. Each concern
/// draws from its own engine so that, e.g., every learner variant in a
/// paired comparison sees the same mini-batches regardless of how many
/// random numbers its own update consumed.
enum class Stream : std::uint32_t {
    Data = 1,
    Batch = 2,
    Subset = 3,
    Init = 4,
    Teacher = 5,
    Map = 6,
    FeatureMap = 7,
    Candidates = 8,
    Holdout = 9,
};

/// Splitting rule: the engine for (seed, stream) is seeded with the
/// seed_seq {lo32(seed), hi32(seed), stream id}.
inline Rng make_stream(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

} // namespace ital
