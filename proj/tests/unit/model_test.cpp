// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "kvspec/error.hpp"
#include "kvspec/workload.hpp"

namespace kvspec {
namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.layers = 2;
  s.model_dim = 16;
  s.heads = 2;
  s.ffn_dim = 32;
  s.outlier_channels = 2;
  s.outlier_scale = 4.0f;
  s.seed = 7;
  return s;
}

TEST(ModelSpecTest, RejectsInconsistentSizes) {
  ModelSpec s = small_spec();
  s.heads = 3;
  EXPECT_THROW(s.validate(), ValidationError);
  s = small_spec();
  s.outlier_scale = 0.5f;
  EXPECT_THROW(s.validate(), ValidationError);
  s = small_spec();
  s.outlier_channels = 17;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(GenerateTest, DeterministicPerSeed) {
  EXPECT_EQ(generate_synthetic(small_spec()), generate_synthetic(small_spec()));
  ModelSpec other = small_spec();
  other.seed = 8;
  EXPECT_NE(generate_synthetic(small_spec()).layers[0].w_q, generate_synthetic(other).layers[0].w_q);
}

TEST(GenerateTest, OutlierGainsAreScaledAndValueRowsCompensated) {
  ModelSpec plain = small_spec();
  plain.outlier_scale = 1.0f;
  const Model a = generate_synthetic(plain);
  const Model b = generate_synthetic(small_spec());
  EXPECT_EQ(a.outlier_indices, b.outlier_indices);
  ASSERT_EQ(b.outlier_indices.size(), 2u);
  for (std::size_t c : b.outlier_indices) {
    EXPECT_FLOAT_EQ(b.layers[1].ln1_gain[c], a.layers[1].ln1_gain[c] * 4.0f);
    EXPECT_FLOAT_EQ(b.layers[1].w_v(c, 3), a.layers[1].w_v(c, 3) / 4.0f);
    EXPECT_FLOAT_EQ(b.layers[1].w_q(c, 3), a.layers[1].w_q(c, 3));
  }
}

// Two keys, one query, d = 1: weights are softmax([q k0, q k1]).
TEST(AttentionTest, HandComputedSingleHead) {
  const Matrix q = Matrix::from_rows({{1.0f}});
  const Matrix k = Matrix::from_rows({{0.0f}, {2.0f}});
  const Matrix v = Matrix::from_rows({{10.0f}, {20.0f}});
  const AttentionResult r = attention_head(q, k, v);
  const double w1 = std::exp(2.0) / (1.0 + std::exp(2.0));
  EXPECT_NEAR(r.weights(0, 1), w1, 1e-6);
  EXPECT_NEAR(r.output(0, 0), 10.0 * (1 - w1) + 20.0 * w1, 1e-5);
}

TEST(AttentionTest, PrefillIsCausal) {
  const Matrix q = Matrix::from_rows({{1.0f}, {1.0f}});
  const Matrix k = Matrix::from_rows({{5.0f}, {-5.0f}});
  const Matrix v = Matrix::from_rows({{1.0f}, {2.0f}});
  const AttentionResult r = attention_head(q, k, v);
  EXPECT_FLOAT_EQ(r.weights(0, 0), 1.0f);
  EXPECT_FLOAT_EQ(r.weights(0, 1), 0.0f);
  EXPECT_FLOAT_EQ(r.output(0, 0), 1.0f);
}

TEST(ForwardTest, IncrementalMatchesBatchPrefill) {
  const Model m = generate_synthetic(small_spec());
  const Matrix x = synthetic_tokens(m, 12, 3);
  auto batch = make_caches(m.spec);
  const Matrix full = forward_stack(m, x, batch);
  auto inc = make_caches(m.spec);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Matrix out = forward_stack(m, Matrix::row_vector(x.row(r)), inc);
    for (std::size_t c = 0; c < x.cols(); ++c) EXPECT_NEAR(out(0, c), full(r, c), 1e-4);
  }
  EXPECT_EQ(inc[1][0].keys.rows(), 12u);
}

TEST(ForwardTest, BlockInputsListsEveryLayerAndOutput) {
  const Model m = generate_synthetic(small_spec());
  auto caches = make_caches(m.spec);
  std::vector<Matrix> inputs;
  const Matrix out = forward_stack(m, synthetic_tokens(m, 4, 1), caches, &inputs);
  ASSERT_EQ(inputs.size(), m.spec.layers + 1);
  EXPECT_EQ(inputs.back(), out);
}

TEST(FeedbackTest, RescalesToTargetRms) {
  const std::vector<float> out{3.0f, 4.0f};
  const auto x = feedback_input(out, 2.0);
  EXPECT_NEAR(std::sqrt((x[0] * x[0] + x[1] * x[1]) / 2.0), 2.0, 1e-6);
  EXPECT_NEAR(x[0] / x[1], 0.75, 1e-6);
}

class ModelIoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("kvspec_model_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
    path_ = dir_ / "m.json";
    save_model(generate_synthetic(small_spec()), path_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  nlohmann::json manifest() const {
    std::ifstream in(path_);
    return nlohmann::json::parse(in);
  }
  void write_manifest(const nlohmann::json& j) const {
    std::ofstream out(path_, std::ios::trunc);
    out << j.dump();
  }

  std::filesystem::path dir_;
  std::filesystem::path path_;
};

TEST_F(ModelIoTest, RoundTripIsExact) {
  EXPECT_EQ(load_model(path_), generate_synthetic(small_spec()));
}

TEST_F(ModelIoTest, TruncatedPayloadIsSizeMismatch) {
  std::filesystem::resize_file(dir_ / "m.json.bin", 100);
  EXPECT_THROW(load_model(path_), SizeMismatchError);
}

TEST_F(ModelIoTest, HeadDimDisagreementIsValidationError) {
  auto j = manifest();
  j["spec"]["head_dim"] = 3;
  write_manifest(j);
  EXPECT_THROW(load_model(path_), ValidationError);
}

TEST_F(ModelIoTest, MissingFieldAndGarbageAreManifestErrors) {
  auto j = manifest();
  j.erase("tensors");
  write_manifest(j);
  EXPECT_THROW(load_model(path_), ManifestError);
  std::ofstream(path_, std::ios::trunc) << "{not json";
  EXPECT_THROW(load_model(path_), ManifestError);
}

TEST_F(ModelIoTest, MissingFilesAreIoErrors) {
  std::filesystem::remove(dir_ / "m.json.bin");
  EXPECT_THROW(load_model(path_), IoError);
  EXPECT_THROW(load_model(dir_ / "absent.json"), IoError);
}

}  // namespace
}  // namespace kvspec
