// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/kv_pool.hpp"

#include <algorithm>
#include <string>

#include "kvspec/error.hpp"

namespace kvspec {

std::string to_string(EvictionPolicy p) {
  switch (p) {
    case EvictionPolicy::kFifo:
      return "fifo";
    case EvictionPolicy::kLru:
      return "lru";
    case EvictionPolicy::kCounter:
      return "counter";
  }
  return "unknown";
}

EvictionPolicy parse_policy(std::string_view name) {
  if (name == "fifo") return EvictionPolicy::kFifo;
  if (name == "lru") return EvictionPolicy::kLru;
  if (name == "counter") return EvictionPolicy::kCounter;
  throw InvalidArgument("unknown eviction policy '" + std::string(name) + "'");
}

KvPool::KvPool(std::size_t head_dim, std::optional<std::size_t> limit, EvictionPolicy policy)
    : head_dim_(head_dim), limit_(limit), policy_(policy), keys_(0, head_dim), values_(0, head_dim) {
  if (head_dim == 0) throw InvalidArgument("KvPool: head_dim must be positive");
  if (limit && *limit == 0) throw InvalidArgument("KvPool: limit must be positive");
}

std::uint64_t KvPool::last_fetch_seq(std::size_t j) const {
  const Meta& m = meta_.at(j);
  return m.last_fetch.value_or(m.arrival);
}

std::size_t KvPool::append(std::span<const float> key, std::span<const float> value) {
  if (key.size() != head_dim_ || value.size() != head_dim_) {
    throw InvalidArgument("KvPool::append: row width " + std::to_string(key.size()) + "/" +
                          std::to_string(value.size()) + " != head_dim " + std::to_string(head_dim_));
  }
  Meta fresh{tokens_seen_++, clock_++, std::nullopt, 0};
  std::size_t pos = 0;
  if (limit_ && size() >= *limit_) {
    pos = evict_select();
    keys_.set_row(pos, key);
    values_.set_row(pos, value);
    meta_[pos] = fresh;
    ++evictions_;
  } else {
    pos = size();
    keys_.append_row(key);
    values_.append_row(value);
    meta_.push_back(fresh);
  }
  if (listener_) listener_(pos, key);
  return pos;
}

std::pair<Matrix, Matrix> KvPool::fetch(std::span<const std::size_t> indices) {
  for (std::size_t i : indices) {
    if (i >= size()) {
      throw InvalidArgument("KvPool::fetch: index " + std::to_string(i) + " out of range (size " +
                            std::to_string(size()) + ")");
    }
  }
  const std::uint64_t stamp = clock_++;
  std::vector<bool> touched(size(), false);
  bool saturated = false;
  for (std::size_t i : indices) {
    if (touched[i]) continue;
    touched[i] = true;
    Meta& m = meta_[i];
    m.last_fetch = stamp;
    if (m.counter < kCounterMax) ++m.counter;
    saturated = saturated || m.counter == kCounterMax;
  }
  if (saturated) {
    for (Meta& m : meta_) {
      if (m.counter > 0) m.counter = static_cast<std::uint8_t>(std::max(1, m.counter / 2));
    }
    ++halvings_;
  }
  return {gather_rows(keys_, indices), gather_rows(values_, indices)};
}

std::size_t KvPool::evict_select() const {
  if (meta_.empty()) throw InvalidArgument("KvPool::evict_select: empty pool");
  auto key = [&](std::size_t j) -> std::uint64_t {
    switch (policy_) {
      case EvictionPolicy::kFifo:
        return meta_[j].arrival;
      case EvictionPolicy::kLru:
        return last_fetch_seq(j);
      case EvictionPolicy::kCounter:
        return meta_[j].counter;
    }
    return 0;
  };
  std::size_t best = 0;
  std::uint64_t best_key = key(0);
  for (std::size_t j = 1; j < meta_.size(); ++j) {
    const std::uint64_t k = key(j);
    if (k < best_key) {
      best = j;
      best_key = k;
    }
  }
  return best;
}

}  // namespace kvspec
