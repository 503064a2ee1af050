// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/baselines.hpp"

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "kvspec/error.hpp"
#include "kvspec/random.hpp"

namespace kvspec {
namespace {

TEST(H2oTest, EvictsLowestAccumulatedOutsideRecentWindow) {
  H2oState h(3, 1);
  for (std::size_t t = 0; t < 4; ++t) h.admit(t);
  // Token 3 is recent; among 0..2 token 1 has the lowest score.
  const std::vector<float> w{0.4f, 0.1f, 0.3f, 0.0f};
  EXPECT_EQ(h.step(w), (std::vector<std::size_t>{1}));
  EXPECT_EQ(h.retained(), (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_DOUBLE_EQ(h.accumulated()[1], 0.3f);
}

TEST(H2oTest, AccumulatesAcrossSteps) {
  H2oState h(2, 0);
  h.admit(0);
  h.admit(1);
  EXPECT_TRUE(h.step(std::vector<float>{0.1f, 0.9f}).empty());
  h.admit(2);
  // Accumulated 0.1 + 0.5, 0.9 + 0.0, 0.5: token 2 loses.
  EXPECT_EQ(h.step(std::vector<float>{0.5f, 0.0f, 0.5f}), (std::vector<std::size_t>{2}));
  EXPECT_EQ(h.evicted(), (std::vector<std::size_t>{2}));
}

TEST(H2oTest, DefaultsAndErrors) {
  const H2oState h(10);
  EXPECT_EQ(h.recent_window(), 5u);
  EXPECT_THROW(H2oState(0), InvalidArgument);
  EXPECT_THROW(H2oState(3, 3), InvalidArgument);
  H2oState g(2);
  g.admit(4);
  EXPECT_THROW(g.admit(4), InvalidArgument);
  EXPECT_THROW(g.step(std::vector<float>{0.1f, 0.2f}), InvalidArgument);
}

TEST(H2oBudgetTest, FloorWithMinimumOne) {
  EXPECT_EQ(h2o_budget_tokens(0.2, 256), 51u);
  EXPECT_EQ(h2o_budget_tokens(0.05, 256), 12u);
  EXPECT_EQ(h2o_budget_tokens(0.1, 30), 3u);  // 0.1 * 30 is 3 - ulp in binary
  EXPECT_EQ(h2o_budget_tokens(0.01, 10), 1u);
  EXPECT_THROW(h2o_budget_tokens(0.0, 10), InvalidArgument);
}

TEST(QuantTest, LatticeAndConstantRoundTripExactly) {
  std::vector<float> lattice(64);
  for (std::size_t i = 0; i < lattice.size(); ++i) lattice[i] = -2.0f + 0.5f * static_cast<float>(i % 16);
  EXPECT_EQ(dequantize_group(quantize_group(lattice)), lattice);
  const std::vector<float> c(10, -1.5f);
  const QuantGroup g = quantize_group(c);
  EXPECT_EQ(g.scale, 0.0f);
  EXPECT_EQ(dequantize_group(g), c);
}

TEST(QuantTest, ErrorWithinHalfStep) {
  Rng rng(12);
  std::vector<float> x(64);
  for (float& v : x) v = static_cast<float>(rng.normal());
  const QuantGroup g = quantize_group(x);
  const auto y = dequantize_group(g);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LE(g.codes[i], 15);
    EXPECT_LE(std::abs(y[i] - x[i]), g.scale / 2 * (1 + 1e-5));
  }
}

TEST(QuantTest, RoundtripUsesIndependentGroups) {
  std::vector<float> row(100);
  std::iota(row.begin(), row.end(), 0.0f);
  row[70] = 1000.0f;  // only the second group's scale is affected
  const auto y = quantize_roundtrip(row);
  ASSERT_EQ(y.size(), row.size());
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(y[i], row[i], 63.0 / 15 / 2 + 1e-4);
  EXPECT_FLOAT_EQ(y[70], 1000.0f);
}

TEST(QuantTest, BytesFormula) {
  EXPECT_EQ(quantized_bytes(0), 0u);
  EXPECT_EQ(quantized_bytes(1), 1u + 8u);
  EXPECT_EQ(quantized_bytes(64), 32u + 8u);
  EXPECT_EQ(quantized_bytes(65), 33u + 16u);
  EXPECT_EQ(quantized_bytes(128), 64u + 16u);
}

TEST(OracleSelectTest, PerHeadTopAscending) {
  const auto s = oracle_select({{0.1f, 0.9f, 0.5f}, {3, 2, 1}}, 2);
  EXPECT_EQ(s[0], (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(s[1], (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(oracle_select({{1}}, 2), InvalidArgument);
}

}  // namespace
}  // namespace kvspec
