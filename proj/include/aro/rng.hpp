// Copyright 2026 The ARO Probe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file rng.hpp
/// Pinned random stream shared by every stochastic operation.
///
/// The stream is SplitMix64 used as a counter-based generator: the state is a
/// 64-bit counter advanced by the golden-ratio increment, and each output is
/// the SplitMix64 finalizer applied to the counter. A stream for seed `s`
/// starts from counter `mix64(s)`.
///
/// Bounded integers in [0, n) are `(next() * n) >> 64` computed in 128 bits
/// (no rejection loop). Fisher-Yates walks i = n-1 down to 1 and swaps
/// element i with element `bounded(i + 1)`.
///
/// Per-caption streams use `seed_for(global_seed, caption_id)` which is
/// `mix64(global_seed ^ fnv1a64(caption_id))`. Ports that follow these four
/// rules reproduce every permutation bit for bit.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace aro {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Independent sub-stream seed, e.g. one per strategy or per retry.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::uint64_t stream) noexcept {
  return mix64(seed + kGolden * (stream + 1));
}

constexpr std::uint64_t seed_for(std::uint64_t global_seed,
                                 std::string_view item_id) noexcept {
  return mix64(global_seed ^ fnv1a64(item_id));
}

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept
      : counter_(mix64(seed)) {}

  constexpr std::uint64_t next() noexcept {
    counter_ += kGolden;
    return mix64(counter_);
  }

  /// Uniform-ish integer in [0, n); n must be positive.
  constexpr std::uint64_t bounded(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // UniformRandomBitGenerator surface, for <random> distributions in tests
  // and synthetic data.
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  constexpr result_type operator()() noexcept { return next(); }

 private:
  std::uint64_t counter_;
};

template <typename T, std::size_t Extent>
void fisher_yates(std::span<T, Extent> items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.bounded(i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace aro
