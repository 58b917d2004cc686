#pragma once

#include "vrae/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace vrae {

/// Stable 64-bit stream id for (seed, key): FNV-1a over the key, mixed with the
/// seed through a splitmix64 finalizer. Independent of container or hash
/// implementations, so per-image and per-parameter streams survive reordering.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

/// N(0, 2 / fan_in) fill, reproducible from the seed.
template <typename T>
void kaiming_normal(BasicTensor<T>& tensor, double fan_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (T& v : tensor.values()) v = static_cast<T>(normal(rng));
}

}  // namespace vrae
