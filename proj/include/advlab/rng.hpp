#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace advlab {

// All randomness in the lab flows from one root seed through named substreams,
// so stages and per-sample workers draw from independent, reproducible engines.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
    return splitmix64(root ^ fnv1a64(stream));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index) {
    return splitmix64(derive_seed(root, stream) ^ splitmix64(index + 1));
}

inline std::mt19937_64 substream(std::uint64_t root, std::string_view stream) {
    return std::mt19937_64(derive_seed(root, stream));
}

inline std::mt19937_64 substream(std::uint64_t root, std::string_view stream, std::uint64_t index) {
    return std::mt19937_64(derive_seed(root, stream, index));
}

}  // namespace advlab
