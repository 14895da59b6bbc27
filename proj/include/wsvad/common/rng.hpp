#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wsvad {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives an independent seed for a named sub-stream of a base seed.
///
/// All randomness in the toolkit flows from one user seed. Each consumer
/// asks for `derive_seed(seed, "<purpose>", counter...)`, so sub-pipelines
/// stay reproducible on their own regardless of what else ran before them.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0) noexcept;

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t base, std::string_view stream,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(base, stream, a, b));
}

}  // namespace wsvad
