// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kvspec/error.hpp"
#include "kvspec/random.hpp"
#include "kvspec/tensor.hpp"

namespace kvspec {
namespace {

// Attention restricted to `keep` and renormalized, as the engine records it.
std::vector<float> restricted(const std::vector<float>& w, const std::vector<bool>& keep) {
  double mass = 0;
  for (std::size_t i = 0; i < w.size(); ++i) mass += keep[i] ? w[i] : 0.0;
  std::vector<float> out(w.size(), 0.0f);
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = keep[i] ? static_cast<float>(w[i] / mass) : 0.0f;
  return out;
}

// Over every size-n subset of s <= 12 tokens, the top-n by weight gives the
// highest cosine against the full row.
TEST(AttentionCosineTest, TopWeightSubsetIsBruteForceOptimal) {
  Rng rng(8);
  for (std::size_t s = 2; s <= 12; ++s) {
    std::vector<float> scores(s);
    for (float& v : scores) v = static_cast<float>(3 * rng.normal());
    const auto w = softmax_row(scores);
    const std::size_t n = 1 + rng.below(s);
    double best = -1;
    for (unsigned mask = 0; mask < (1u << s); ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != n) continue;
      std::vector<bool> keep(s);
      for (std::size_t i = 0; i < s; ++i) keep[i] = (mask >> i) & 1u;
      best = std::max(best, attention_cosine_row(restricted(w, keep), w));
    }
    std::vector<bool> top(s, false);
    for (std::size_t i : topk_indices(w, n)) top[i] = true;
    EXPECT_NEAR(attention_cosine_row(restricted(w, top), w), best, 1e-9) << "s=" << s;
  }
}

TEST(AttentionCosineTest, LengthMismatchRejected) {
  const std::vector<float> a{1, 0};
  const std::vector<float> b{1};
  EXPECT_THROW(attention_cosine_row(a, b), InvalidArgument);
}

TEST(CumulativeMassTest, CountsSortedPrefix) {
  const std::vector<float> w{0.1f, 0.5f, 0.3f, 0.1f};
  EXPECT_EQ(tokens_to_cumulative_mass(w, 0.5), 1u);
  EXPECT_EQ(tokens_to_cumulative_mass(w, 0.8), 2u);
  EXPECT_EQ(tokens_to_cumulative_mass(w, 1.0), 4u);
  EXPECT_THROW(tokens_to_cumulative_mass(w, 0.0), InvalidArgument);
}

TEST(RecallTest, OverlapFraction) {
  const std::vector<std::size_t> sel{1, 4, 7};
  const std::vector<std::size_t> oracle{7, 2, 1, 9};
  EXPECT_DOUBLE_EQ(recall_at_oracle(sel, oracle), 0.5);
  EXPECT_DOUBLE_EQ(recall_at_oracle({}, {}), 1.0);
}

TEST(HeadRecallTest, UsesTrueScoreTopOfSelectionSize) {
  HeadRecord h;
  h.selected = {0, 2};
  h.true_scores = {5, 1, 4, 3};
  EXPECT_DOUBLE_EQ(*head_recall(h, 4), 1.0);
  h.selected = {1, 3};
  EXPECT_DOUBLE_EQ(*head_recall(h, 4), 0.0);
  EXPECT_FALSE(head_recall(h, 5).has_value());
}

class ReportTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ModelSpec s;
    s.layers = 2;
    s.model_dim = 16;
    s.heads = 2;
    s.ffn_dim = 32;
    s.outlier_scale = 10.0f;
    const Model m = testing::skewed_model(s);
    RunConfig c;
    c.scheme = Scheme::kInfinigen;
    c.prompt_len = 20;
    c.gen_len = 3;
    c.record_scores = true;
    c.record_attention = true;
    trace_ = new Trace(run(m, c));
  }
  static void TearDownTestSuite() { delete trace_; }
  static const Trace* trace_;
};
const Trace* ReportTest::trace_ = nullptr;

TEST_F(ReportTest, RowsPerIterationAndLayer) {
  const auto rows = report_rows({*trace_}, {});
  ASSERT_EQ(rows.size(), 3u * 2u);
  EXPECT_EQ(rows[0].scheme, "infinigen");
  EXPECT_EQ(rows[3].iteration, 1u);
  EXPECT_EQ(rows[3].layer, 1u);
  // Layer 0 fetches every row, so its recall is trivially 1.
  ASSERT_TRUE(rows[0].recall.has_value());
  EXPECT_DOUBLE_EQ(*rows[0].recall, 1.0);
  EXPECT_TRUE(rows[1].recall.has_value());
  ASSERT_TRUE(rows[0].cosine.has_value());
  EXPECT_NEAR(*rows[0].cosine, 1.0, 1e-6);
}

TEST_F(ReportTest, CsvColumnsFollowMetricOrder) {
  const auto rows = report_rows({*trace_}, {});
  const std::string csv = report_csv(rows, {"latency", "bytes"});
  const std::string header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header, "scheme,sequence,iteration,layer,bytes,load_s,attention_s,ffn_s,exposed_s");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(report_csv(rows, {}), "scheme,sequence,iteration,layer\n");
  EXPECT_THROW(report_csv(rows, {"speed"}), InvalidArgument);
}

TEST_F(ReportTest, JsonTotalsMatchSummary) {
  const auto rows = report_rows({*trace_}, {});
  const std::string js = report_json(rows, {"bytes"});
  const TraceSummary s = summarize(*trace_, {});
  EXPECT_NE(js.find("\"total_bytes\""), std::string::npos);
  double total = 0;
  for (const auto& r : rows) total += r.bytes;
  EXPECT_DOUBLE_EQ(total, s.total_bytes);
  EXPECT_LT(s.total_bytes, s.full_bytes);
  ASSERT_TRUE(s.mean_cosine.has_value());
  ASSERT_TRUE(s.mean_recall.has_value());
  EXPECT_EQ(s.latency_s.size(), 4u);
}

TEST_F(ReportTest, WriteReportCreatesBothFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "kvspec_report_test";
  std::filesystem::create_directories(dir);
  write_report(report_rows({*trace_}, {}), {"cosine"}, dir / "r.csv", dir / "r.json");
  EXPECT_GT(std::filesystem::file_size(dir / "r.csv"), 0u);
  EXPECT_GT(std::filesystem::file_size(dir / "r.json"), 0u);
  EXPECT_THROW(write_report({}, {}, dir / "missing" / "r.csv", dir / "r.json"), IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace kvspec
