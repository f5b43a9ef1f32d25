// Copyright 2026 The n3pc Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace n3pc {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

/// Counter-based random stream. A stream is identified by a key derived from
/// the master seed and the path of (scope, index) splits that produced it;
/// output k is mix64(key + k * golden). Children never share keys with their
/// parent, so splitting does not disturb the parent's sequence.
///
/// Distributions are implemented here (not via <random>) so that runs are
/// bit-reproducible across standard libraries.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t master_seed = 0)
      : key_(detail::mix64(master_seed ^ 0x6A09E667F3BCC908ull)) {}

  [[nodiscard]] RngStream split(std::string_view scope, std::uint64_t index = 0) const {
    RngStream child;
    const std::uint64_t tag = detail::mix64(detail::fnv1a(scope) + detail::kGolden * (index + 1));
    child.key_ = detail::mix64(key_ ^ tag ^ 0xD1B54A32D192ED03ull);
    return child;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound), unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % bound;
  }

  /// Bernoulli(p). Consumes one draw unless p >= 1 or p <= 0.
  bool bernoulli(double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return uniform() < p;
  }

  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace n3pc
