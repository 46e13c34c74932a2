#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace gmmvs {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a child seed from a parent and an ordered list of discriminators.
/// Child streams are independent of evaluation order, so concurrent callers
/// see the same randomness as a sequential run.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t h = mix64(parent);
    for (auto p : parts) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

template <class Int>
constexpr std::uint64_t hash_indices(std::span<const Int> indices) noexcept {
    std::uint64_t h = mix64(indices.size());
    for (auto i : indices) h = mix64(h ^ static_cast<std::uint64_t>(i));
    return h;
}

}  // namespace gmmvs
