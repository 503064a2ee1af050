// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kvspec {

/// Heavy-hitter eviction for one head: a fixed budget of retained tokens,
/// ranked by attention weight accumulated over every iteration they were
/// retained. The newest `recent_window` tokens are never evicted and an
/// evicted token never comes back.
class H2oState {
 public:
  /// Requires budget >= 1; recent_window defaults to budget / 2.
  explicit H2oState(std::size_t budget);
  H2oState(std::size_t budget, std::size_t recent_window);

  /// Starts tracking `token` with zero accumulated weight. Tokens must be
  /// admitted in increasing order.
  void admit(std::size_t token);

  /// Adds `weights` (aligned with retained()) to the accumulators, then
  /// evicts until at most `budget` tokens remain. Returns evicted tokens.
  std::vector<std::size_t> step(std::span<const float> weights);

  /// Retained token ids, ascending.
  const std::vector<std::size_t>& retained() const noexcept { return tokens_; }
  const std::vector<double>& accumulated() const noexcept { return acc_; }
  std::size_t budget() const noexcept { return budget_; }
  std::size_t recent_window() const noexcept { return recent_window_; }
  /// Every token evicted so far, in eviction order.
  const std::vector<std::size_t>& evicted() const noexcept { return evicted_; }

 private:
  std::vector<std::size_t> compress();

  std::size_t budget_;
  std::size_t recent_window_;
  std::vector<std::size_t> tokens_;
  std::vector<double> acc_;
  std::vector<std::size_t> evicted_;
};

/// floor(fraction * tokens), at least 1.
std::size_t h2o_budget_tokens(double fraction, std::size_t tokens);

inline constexpr std::size_t kQuantGroupSize = 64;
inline constexpr std::size_t kQuantGroupOverheadBytes = 8;  // f32 scale + f32 zero

struct QuantGroup {
  std::vector<std::uint8_t> codes;  // one 4-bit code per element, in [0, 15]
  float scale = 0.0f;
  float zero = 0.0f;
};

/// Asymmetric 4-bit quantization: zero = min, scale = (max - min) / 15.
QuantGroup quantize_group(std::span<const float> x);
std::vector<float> dequantize_group(const QuantGroup& g);

/// Quantize-dequantize a row in consecutive groups of `group` elements.
std::vector<float> quantize_roundtrip(std::span<const float> row,
                                      std::size_t group = kQuantGroupSize);

/// Packed storage of `elements` values: ceil(elements / 2) code bytes plus
/// 8 bytes per group.
std::size_t quantized_bytes(std::size_t elements, std::size_t group = kQuantGroupSize);

/// Per head, the `n` highest-scoring token indices (ascending).
std::vector<std::vector<std::size_t>> oracle_select(const std::vector<std::vector<float>>& scores,
                                                    std::size_t n);

}  // namespace kvspec
