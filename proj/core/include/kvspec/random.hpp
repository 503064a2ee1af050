// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace kvspec {

// Seeded generator with platform-independent output. std::mt19937_64 is fully
// specified by the standard; the distributions in <random> are not, so the
// uniform and normal transforms are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  /// Standard normal (Box-Muller, caches the second variate).
  double normal();

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  /// `count` distinct values from [0, n), returned in ascending order.
  std::vector<std::size_t> choose(std::size_t n, std::size_t count);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a base seed and a stream tag.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace kvspec
