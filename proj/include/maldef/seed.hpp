#pragma once

#include <cstdint>
#include <string_view>

namespace maldef {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Child seed = mix64(parent ^ fnv1a(name)). Every component that consumes
/// randomness derives its own stream this way from the experiment seed.
constexpr std::uint64_t child_seed(std::uint64_t parent, std::string_view name) noexcept {
    return mix64(parent ^ fnv1a(name));
}

constexpr std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) noexcept {
    return mix64(parent ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

} // namespace maldef
