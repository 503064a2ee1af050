// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kvspec/tensor.hpp"

namespace kvspec {

enum class EvictionPolicy { kFifo, kLru, kCounter };

std::string to_string(EvictionPolicy p);
/// Accepts "fifo", "lru" and "counter".
EvictionPolicy parse_policy(std::string_view name);

/// CPU-side store of one head's key/value rows. Rows grow until `limit`;
/// afterwards every append overwrites a victim chosen by the policy. Row j
/// of keys and row j of values always belong to the same token.
///
/// Not thread-safe; each pool has a single owner.
class KvPool {
 public:
  /// Called on every row write with (position, key row), for both appends
  /// and overwrites.
  using SlotListener = std::function<void(std::size_t, std::span<const float>)>;

  static constexpr std::uint8_t kCounterMax = 255;

  KvPool(std::size_t head_dim, std::optional<std::size_t> limit, EvictionPolicy policy);

  /// Stores a token's rows and returns their position.
  std::size_t append(std::span<const float> key, std::span<const float> value);

  /// Gathers rows in the given order and updates fetch metadata. Each
  /// distinct row's counter is incremented once; if any reaches 255 all
  /// counters are halved, nonzero ones staying at least 1.
  std::pair<Matrix, Matrix> fetch(std::span<const std::size_t> indices);

  /// Victim for the next overwrite. Ties go to the lowest index.
  std::size_t evict_select() const;

  void set_listener(SlotListener listener) { listener_ = std::move(listener); }

  std::size_t size() const noexcept { return keys_.rows(); }
  std::size_t head_dim() const noexcept { return head_dim_; }
  std::optional<std::size_t> limit() const noexcept { return limit_; }
  EvictionPolicy policy() const noexcept { return policy_; }

  const Matrix& keys() const noexcept { return keys_; }
  const Matrix& values() const noexcept { return values_; }

  /// Arrival ordinal of the token stored at row j (its sequence position
  /// when tokens are appended in order).
  std::size_t token_id(std::size_t j) const { return meta_.at(j).token; }
  std::uint64_t arrival_seq(std::size_t j) const { return meta_.at(j).arrival; }
  /// Recency stamp used by LRU: last fetch, or arrival if never fetched.
  std::uint64_t last_fetch_seq(std::size_t j) const;
  std::uint8_t counter(std::size_t j) const { return meta_.at(j).counter; }

  std::size_t evictions() const noexcept { return evictions_; }
  std::size_t halvings() const noexcept { return halvings_; }

 private:
  struct Meta {
    std::size_t token = 0;
    std::uint64_t arrival = 0;
    std::optional<std::uint64_t> last_fetch;
    std::uint8_t counter = 0;
  };

  std::size_t head_dim_;
  std::optional<std::size_t> limit_;
  EvictionPolicy policy_;
  Matrix keys_;
  Matrix values_;
  std::vector<Meta> meta_;
  std::uint64_t clock_ = 0;
  std::size_t tokens_seen_ = 0;
  std::size_t evictions_ = 0;
  std::size_t halvings_ = 0;
  SlotListener listener_;
};

}  // namespace kvspec
