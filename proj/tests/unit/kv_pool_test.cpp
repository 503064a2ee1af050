// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/kv_pool.hpp"

#include <vector>

#include <gtest/gtest.h>

#include "kvspec/error.hpp"

namespace kvspec {
namespace {

std::vector<float> row(float v) { return {v, -v}; }

void push(KvPool& p, float v) {
  const auto r = row(v);
  p.append(r, r);
}

void fetch(KvPool& p, std::vector<std::size_t> idx) { p.fetch(idx); }

TEST(PolicyNamesTest, RoundTrip) {
  for (EvictionPolicy p : {EvictionPolicy::kFifo, EvictionPolicy::kLru, EvictionPolicy::kCounter}) {
    EXPECT_EQ(parse_policy(to_string(p)), p);
  }
  EXPECT_THROW(parse_policy("random"), InvalidArgument);
}

TEST(KvPoolTest, UnboundedAppendsAndFetchesInOrder) {
  KvPool p(2, std::nullopt, EvictionPolicy::kCounter);
  for (int i = 0; i < 5; ++i) push(p, static_cast<float>(i));
  EXPECT_EQ(p.size(), 5u);
  EXPECT_EQ(p.evictions(), 0u);
  const auto [k, v] = p.fetch(std::vector<std::size_t>{3, 1});
  EXPECT_EQ(k, Matrix::from_rows({{3, -3}, {1, -1}}));
  EXPECT_EQ(v, k);
  EXPECT_EQ(p.token_id(4), 4u);
}

TEST(KvPoolTest, RejectsBadShapesAndIndices) {
  EXPECT_THROW(KvPool(0, std::nullopt, EvictionPolicy::kFifo), InvalidArgument);
  EXPECT_THROW(KvPool(2, 0, EvictionPolicy::kFifo), InvalidArgument);
  KvPool p(2, std::nullopt, EvictionPolicy::kFifo);
  const std::vector<float> wide{1, 2, 3};
  EXPECT_THROW(p.append(wide, wide), InvalidArgument);
  push(p, 1);
  EXPECT_THROW(fetch(p, {1}), InvalidArgument);
  KvPool empty(2, 1, EvictionPolicy::kLru);
  EXPECT_THROW(empty.evict_select(), InvalidArgument);
}

TEST(KvPoolTest, FifoEvictsOldestArrival) {
  KvPool p(2, 3, EvictionPolicy::kFifo);
  for (int i = 0; i < 3; ++i) push(p, static_cast<float>(i));
  fetch(p, {0});
  const auto r = row(10);
  EXPECT_EQ(p.append(r, r), 0u);  // token 0 arrived first regardless of use
  EXPECT_EQ(p.evict_select(), 1u);
  EXPECT_EQ(p.evictions(), 1u);
  EXPECT_EQ(p.token_id(0), 3u);
}

TEST(KvPoolTest, LruEvictsLeastRecentlyFetched) {
  KvPool p(2, 3, EvictionPolicy::kLru);
  for (int i = 0; i < 3; ++i) push(p, static_cast<float>(i));
  fetch(p, {0, 2});
  fetch(p, {0});
  EXPECT_EQ(p.evict_select(), 1u);  // never fetched, falls back to arrival
  fetch(p, {1});
  EXPECT_EQ(p.evict_select(), 2u);
}

TEST(KvPoolTest, CounterCountsDistinctRowsOncePerFetch) {
  KvPool p(2, 3, EvictionPolicy::kCounter);
  for (int i = 0; i < 3; ++i) push(p, static_cast<float>(i));
  fetch(p, {0, 0, 2});
  EXPECT_EQ(p.counter(0), 1);
  EXPECT_EQ(p.counter(1), 0);
  EXPECT_EQ(p.evict_select(), 1u);
  fetch(p, {1});
  fetch(p, {1});
  // Counters 1, 2, 1: ties go to the lowest index.
  EXPECT_EQ(p.evict_select(), 0u);
}

TEST(KvPoolTest, CounterSaturationHalvesAllWithFloorOfOne) {
  KvPool p(2, std::nullopt, EvictionPolicy::kCounter);
  for (int i = 0; i < 3; ++i) push(p, static_cast<float>(i));
  fetch(p, {1});
  for (int i = 0; i < 255; ++i) fetch(p, {0});
  EXPECT_EQ(p.halvings(), 1u);
  EXPECT_EQ(p.counter(0), 127);
  EXPECT_EQ(p.counter(1), 1);  // 1 / 2 floors to 0, held at 1
  EXPECT_EQ(p.counter(2), 0);
}

TEST(KvPoolTest, ReplacementResetsMetadataAndNotifiesListener) {
  KvPool p(2, 2, EvictionPolicy::kCounter);
  std::vector<std::pair<std::size_t, float>> writes;
  p.set_listener([&](std::size_t pos, std::span<const float> key) { writes.emplace_back(pos, key[0]); });
  push(p, 1);
  push(p, 2);
  fetch(p, {0});
  push(p, 3);
  ASSERT_EQ(writes.size(), 3u);
  EXPECT_EQ(writes[2], (std::pair<std::size_t, float>{1, 3.0f}));
  EXPECT_EQ(p.counter(1), 0);
  EXPECT_EQ(p.last_fetch_seq(1), p.arrival_seq(1));
  EXPECT_EQ(p.keys()(1, 1), -3.0f);
  EXPECT_EQ(p.values()(1, 0), 3.0f);
}

}  // namespace
}  // namespace kvspec
