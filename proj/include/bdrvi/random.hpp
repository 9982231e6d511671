#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace bdrvi {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stable derivation of a child seed from a parent seed and a list of keys.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = mix64(base);
    for (auto k : keys) h = mix64(h ^ mix64(k));
    return h;
}

/// FNV-1a, used to turn short labels into seed keys.
constexpr std::uint64_t label_key(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace bdrvi
