#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "clm/bytes.hpp"

namespace clm {

// All randomness flows from one root seed. Substreams are derived by hashing
// the root seed with a stream name, so adding a consumer never shifts the
// draws of another.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
    std::uint64_t h = fnv1a64(stream.data(), stream.size());
    h ^= root + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    // splitmix64 finalizer
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view stream) {
    return std::mt19937_64(derive_seed(root, stream));
}

}  // namespace clm
