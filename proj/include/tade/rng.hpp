// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tade {

/// Counter-based generator: the n-th draw is a pure function of (key, n), so
/// a (seed, position) pair reproduces the stream on every platform. Gaussian
/// draws use Box-Muller on top of the same counter to avoid depending on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), key_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return counter_; }

  /// Independent child stream. Children with different ids never overlap the
  /// parent or each other; the parent's position is not advanced.
  Rng split(std::uint64_t stream_id) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  bool operator==(const Rng&) const = default;

  static std::uint64_t mix(std::uint64_t z);

 private:
  Rng(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace tade
