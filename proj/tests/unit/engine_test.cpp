// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/engine.hpp"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "kvspec/baselines.hpp"
#include "kvspec/error.hpp"
#include "kvspec/workload.hpp"

namespace kvspec {
namespace {

ModelSpec small_spec(std::uint64_t seed = 3) {
  ModelSpec s;
  s.layers = 3;
  s.model_dim = 32;
  s.heads = 2;
  s.ffn_dim = 64;
  s.outlier_scale = kCalibratedOutlierScale;
  s.seed = seed;
  return s;
}

RunConfig config(Scheme s) {
  RunConfig c;
  c.scheme = s;
  c.prompt_len = 40;
  c.gen_len = 6;
  return c;
}

class EngineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new Model(testing::skewed_model(small_spec()));
    prompt_ = new Matrix(synthetic_tokens(*model_, 40, 0));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete prompt_;
  }
  static const Model* model_;
  static const Matrix* prompt_;
};
const Model* EngineTest::model_ = nullptr;
const Matrix* EngineTest::prompt_ = nullptr;

TEST(SchemeNamesTest, RoundTrip) {
  for (Scheme s : kAllSchemes) EXPECT_EQ(parse_scheme(to_string(s)), s);
  EXPECT_THROW(parse_scheme("flexgen"), InvalidArgument);
}

TEST(RunConfigTest, Validation) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.scheme = Scheme::kH2o;
  c.pool_limit = 10;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.prompt_len = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.h2o_budget = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.speculation.cap_ratio = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

// The reference decoder is an independent implementation without pools.
TEST_F(EngineTest, FullSchemeIsBitIdenticalToReferenceDecode) {
  const SequenceTrace seq = run_sequence(*model_, config(Scheme::kFull), *prompt_);
  EXPECT_EQ(seq.outputs, reference_decode(*model_, *prompt_, 6));
}

TEST_F(EngineTest, InfinigenNeedsSkewedModel) {
  const Model plain = generate_synthetic(small_spec());
  EXPECT_THROW(Engine(plain, config(Scheme::kInfinigen)), InvalidArgument);
}

TEST_F(EngineTest, DecodeBeforePrefillAndDoublePrefillRejected) {
  Engine e(*model_, config(Scheme::kFull));
  EXPECT_THROW(e.decode_step(prompt_->row(0)), InvalidArgument);
  e.prefill(*prompt_);
  EXPECT_THROW(e.prefill(*prompt_), InvalidArgument);
  EXPECT_THROW(e.decode_step(std::vector<float>(3)), InvalidArgument);
}

TEST_F(EngineTest, FullSchemeMovesWholeCache) {
  const SequenceTrace seq = run_sequence(*model_, config(Scheme::kFull), *prompt_);
  ASSERT_EQ(seq.iterations.size(), 6u);
  for (std::size_t t = 0; t < 6; ++t) {
    for (const auto& l : seq.iterations[t].layers) {
      EXPECT_EQ(l.pool_rows, 40 + t);
      EXPECT_EQ(l.n_selected, 40 + t);
      EXPECT_DOUBLE_EQ(l.bytes, l.full_bytes);
      EXPECT_DOUBLE_EQ(l.full_bytes, 2.0 * 2 * 16 * (40 + t) * 2);
    }
  }
}

TEST_F(EngineTest, InfinigenSpeculatesFromLayerOneAndKeepsPartialsInStep) {
  RunConfig c = config(Scheme::kInfinigen);
  c.record_scores = true;
  Engine e(*model_, c);
  e.prefill(*prompt_);
  EXPECT_TRUE(e.partials().layers[0].empty());
  IterationRecord rec;
  e.decode_step(prompt_->row(3), &rec);
  for (std::size_t l = 1; l < 3; ++l) {
    for (std::size_t h = 0; h < 2; ++h) {
      EXPECT_EQ(e.partials().layers[l][h].partial_k.rows(), e.pool(l, h).size());
      EXPECT_EQ(e.partials().layers[l][h].columns.size(), partial_column_count(0.3, 16));
    }
  }
  EXPECT_EQ(rec.layers[0].n_selected, 40u);
  // cap 0.2 of 40 rows
  EXPECT_LE(rec.layers[1].n_selected, 8u);
  EXPECT_EQ(rec.layers[1].heads[0].speculated_scores.size(), 40u);
  EXPECT_LT(rec.layers[1].bytes, rec.layers[1].full_bytes);
  EXPECT_GT(rec.layers[0].speculation_flops, 0.0);
  EXPECT_EQ(rec.layers[2].speculation_flops, 0.0);
}

TEST_F(EngineTest, VacuousThresholdMatchesFullCache) {
  RunConfig c = config(Scheme::kInfinigen);
  c.speculation.alpha = std::numeric_limits<double>::infinity();
  c.speculation.cap_ratio = 1.0;
  const Matrix a = run_sequence(*model_, c, *prompt_).outputs;
  const Matrix b = run_sequence(*model_, config(Scheme::kFull), *prompt_).outputs;
  EXPECT_LE(max_abs_diff(a, b), 1e-3f);
}

TEST_F(EngineTest, PoolLimitIsRespectedAndEvictionsCounted) {
  RunConfig c = config(Scheme::kInfinigen);
  c.pool_limit = 42;
  c.policy = EvictionPolicy::kFifo;
  Engine e(*model_, c);
  e.prefill(*prompt_);
  std::size_t evictions = 0;
  for (std::size_t t = 0; t < 5; ++t) {
    IterationRecord rec;
    e.decode_step(prompt_->row(t), &rec);
    for (const auto& l : rec.layers) evictions += l.evictions;
  }
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(e.pool(l, 0).size(), 42u);
  EXPECT_EQ(evictions, 3u * 3u * 2u);  // 3 overflowing tokens, 3 layers, 2 heads
}

TEST_F(EngineTest, H2oKeepsBudgetAndNeverRevisitsEvicted) {
  RunConfig c = config(Scheme::kH2o);
  c.h2o_budget = 0.25;
  const std::size_t budget = h2o_budget_tokens(0.25, 40);
  Engine e(*model_, c);
  e.prefill(*prompt_);
  for (std::size_t t = 0; t < 6; ++t) {
    IterationRecord rec;
    e.decode_step(prompt_->row(t), &rec);
    for (const auto& l : rec.layers) {
      EXPECT_EQ(l.n_selected, budget);
      for (const auto& h : l.heads) {
        const auto& evicted = e.h2o(l.layer, 0).evicted();
        (void)h;
        for (std::size_t tok : e.h2o(l.layer, 0).retained()) {
          EXPECT_EQ(std::count(evicted.begin(), evicted.end(), tok), 0);
        }
      }
    }
    for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(e.h2o(l, 1).retained().size(), budget);
  }
}

TEST_F(EngineTest, QuantMovesPackedBytes) {
  const SequenceTrace seq = run_sequence(*model_, config(Scheme::kQuant4), *prompt_);
  const auto& l = seq.iterations[2].layers[1];
  EXPECT_DOUBLE_EQ(l.bytes, static_cast<double>(42 * 2 * quantized_bytes(32)));
  // Lossy, but close to the full-cache run.
  const Matrix full = run_sequence(*model_, config(Scheme::kFull), *prompt_).outputs;
  EXPECT_GT(max_abs_diff(seq.outputs, full), 0.0f);
}

TEST_F(EngineTest, OracleUsesConfiguredTokenCount) {
  RunConfig c = config(Scheme::kOracle);
  c.oracle_tokens = 5;
  c.record_scores = true;
  const SequenceTrace seq = run_sequence(*model_, c, *prompt_);
  for (const auto& it : seq.iterations) {
    for (const auto& l : it.layers) {
      EXPECT_EQ(l.n_selected, 5u);
      for (const auto& h : l.heads) {
        std::vector<std::size_t> top = topk_indices(h.true_scores, 5);
        std::sort(top.begin(), top.end());
        EXPECT_EQ(h.selected, top);
      }
    }
  }
}

TEST_F(EngineTest, ExternalDecodeInputsOverrideGenLen) {
  const Matrix inputs = synthetic_tokens(*model_, 3, 9);
  const SequenceTrace seq = run_sequence(*model_, config(Scheme::kFull), *prompt_, &inputs);
  EXPECT_EQ(seq.outputs.rows(), 3u);
  const Matrix bad(2, 5);
  EXPECT_THROW(run_sequence(*model_, config(Scheme::kFull), *prompt_, &bad), InvalidArgument);
}

TEST_F(EngineTest, RunBatchesIndependentSequences) {
  RunConfig c = config(Scheme::kFull);
  c.batch = 2;
  c.gen_len = 2;
  const Trace t = run(*model_, c);
  ASSERT_EQ(t.sequences.size(), 2u);
  EXPECT_NE(t.sequences[0].outputs, t.sequences[1].outputs);
  EXPECT_EQ(t.spec, model_->spec);
}

TEST_F(EngineTest, CostTraceMirrorsRecords) {
  const SequenceTrace seq = run_sequence(*model_, config(Scheme::kInfinigen), *prompt_);
  const CostTrace ct = cost_trace(seq);
  ASSERT_EQ(ct.size(), seq.iterations.size());
  EXPECT_DOUBLE_EQ(ct[1][2].selected_bytes, seq.iterations[1].layers[2].bytes);
  EXPECT_DOUBLE_EQ(ct[1][2].full_bytes, seq.iterations[1].layers[2].full_bytes);
  EXPECT_EQ(natural_style(Scheme::kFull), ExecutionStyle::kPrefetchAll);
  EXPECT_EQ(natural_style(Scheme::kInfinigen), ExecutionStyle::kSelectivePrefetch);
}

}  // namespace
}  // namespace kvspec
