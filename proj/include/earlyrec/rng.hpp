#pragma once

#include <cstdint>
#include <random>

namespace earlyrec {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Named stochastic components each draw from their own sub-stream.
enum class Stream : std::uint64_t {
    centroids = 1,
    sequence = 2,
    split = 3,
    encoder_init = 4,
    encoder_train = 5,
    lstm_init = 6,
    shuffle = 7,
    gradcheck = 8,
};

/// Seed for sub-stream `index` of `stream`, derived from a run seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) noexcept {
    return mix64(mix64(seed ^ mix64(static_cast<std::uint64_t>(stream))) + index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    return Rng(derive_seed(seed, stream, index));
}

} // namespace earlyrec
