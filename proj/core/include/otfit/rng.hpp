#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace otfit {

using Rng = std::mt19937_64;

/// Independent generator for one (seed, stream...) coordinate. The same
/// coordinates always give the same sequence, so a run can be resumed at
/// any outer iteration without replaying earlier draws.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

/// Stable 64-bit FNV-1a hash, used for config fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;

}  // namespace otfit
