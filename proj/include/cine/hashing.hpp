#pragma once

#include <cstdint>
#include <string>

namespace cine {

// FNV-1a, the workhorse behind every deterministic choice in the mocks and
// the seed threading in the pipeline. Stable across platforms and runs.
inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    // splitmix64 finalizer over the xor; cheap and well distributed.
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

inline std::uint64_t hash_combine(std::uint64_t h, const std::string& s) {
    return hash_combine(h, fnv1a64(s));
}

// Uniform double in [0, 1) from a hash.
inline double hash_unit(std::uint64_t h) {
    return double(h >> 11) * (1.0 / 9007199254740992.0);  // 53 bits
}

}  // namespace cine
