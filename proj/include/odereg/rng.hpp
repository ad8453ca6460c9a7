#pragma once

#include <cstdint>

namespace odereg {

/// SplitMix64 finalizer; derives independent stream seeds from (root, index).
inline std::uint64_t stream_seed(std::uint64_t root, std::uint64_t index) {
    std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace odereg
