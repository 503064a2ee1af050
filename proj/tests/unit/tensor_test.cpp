// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/tensor.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "kvspec/error.hpp"
#include "kvspec/random.hpp"

namespace kvspec {
namespace {

TEST(MatrixTest, AppendAdoptsWidthAndRejectsMismatch) {
  Matrix m;
  const std::vector<float> row{1, 2, 3};
  m.append_row(row);
  EXPECT_EQ(m.rows(), 1u);
  EXPECT_EQ(m.cols(), 3u);
  const std::vector<float> bad{1, 2};
  EXPECT_THROW(m.append_row(bad), InvalidArgument);
}

TEST(MatrixTest, EraseRowShiftsLaterRows) {
  Matrix m = Matrix::from_rows({{1, 1}, {2, 2}, {3, 3}});
  m.erase_row(1);
  EXPECT_EQ(m, Matrix::from_rows({{1, 1}, {3, 3}}));
}

TEST(MatmulTest, SmallProduct) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b), Matrix::from_rows({{19, 22}, {43, 50}}));
  EXPECT_EQ(matmul_transposed(a, b), Matrix::from_rows({{17, 23}, {39, 53}}));
  EXPECT_THROW(matmul(a, Matrix(3, 2)), InvalidArgument);
}

TEST(SoftmaxTest, SumsToOneAndIsShiftInvariant) {
  const std::vector<float> x{1.0f, 2.0f, 3.0f};
  const std::vector<float> shifted{1001.0f, 1002.0f, 1003.0f};
  const auto a = softmax_row(x);
  const auto b = softmax_row(shifted);
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    total += a[i];
    EXPECT_NEAR(a[i], b[i], 1e-7);
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
  // e^1 / (e^1 + e^2 + e^3), computed independently.
  EXPECT_NEAR(a[0], std::exp(1.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)), 1e-7);
}

TEST(LayernormTest, ZeroMeanUnitVarianceBeforeAffine) {
  const std::vector<float> x{1, 2, 3, 4};
  const std::vector<float> gain(4, 1.0f);
  const std::vector<float> bias(4, 0.0f);
  const auto y = layernorm(x, gain, bias, 1e-5f);
  // mean 2.5, population variance 1.25
  const double inv = 1.0 / std::sqrt(1.25 + 1e-5);
  EXPECT_NEAR(y[0], -1.5 * inv, 1e-6);
  EXPECT_NEAR(y[3], 1.5 * inv, 1e-6);
  EXPECT_THROW(layernorm(x, gain, bias, 0.0f), InvalidArgument);
}

// Singular values of [[0, 2], [1, 0]]: roots of the characteristic
// polynomial of M^T M = diag(1, 4), so sigma = {2, 1}.
TEST(SvdTest, TwoByTwoFromCharacteristicPolynomial) {
  const Matrix m = Matrix::from_rows({{0, 2}, {1, 0}});
  const double tr = 1.0 + 4.0;
  const double det = 1.0 * 4.0;
  const double disc = std::sqrt(tr * tr - 4 * det);
  const SvdResult f = svd(m);
  ASSERT_EQ(f.sigma.size(), 2u);
  EXPECT_NEAR(f.sigma[0], std::sqrt((tr + disc) / 2), 1e-6);
  EXPECT_NEAR(f.sigma[1], std::sqrt((tr - disc) / 2), 1e-6);
  // Sign convention: largest-magnitude entry of each V column is positive.
  EXPECT_NEAR(f.v(1, 0), 1.0, 1e-6);
  EXPECT_NEAR(f.v(0, 1), 1.0, 1e-6);
}

TEST(SvdTest, RankDeficientAndWideShapes) {
  Rng rng(3);
  for (const auto& [n, d] : {std::pair<std::size_t, std::size_t>{3, 7}, {9, 2}, {5, 5}}) {
    Matrix m(n, d);
    for (float& v : m.data()) v = static_cast<float>(rng.normal());
    // Duplicate a row to drop the rank.
    if (n > 1) m.set_row(n - 1, std::vector<float>(m.row(0).begin(), m.row(0).end()));
    const SvdResult f = svd(m);
    EXPECT_EQ(f.sigma.size(), std::min(n, d));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < f.sigma.size(); ++k) acc += double(f.u(i, k)) * f.sigma[k] * f.v(j, k);
        EXPECT_NEAR(acc, m(i, j), 1e-4);
      }
    }
  }
}

TEST(TopkTest, TiesGoToLowerIndex) {
  const std::vector<float> v{1, 3, 3, 2, 3};
  EXPECT_EQ(topk_indices(v, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(topk_indices(v, 4), (std::vector<std::size_t>{1, 2, 4, 3}));
  EXPECT_EQ(topk_indices(v, 0).size(), 0u);
}

TEST(ColumnOpsTest, NormsSliceGather) {
  const Matrix m = Matrix::from_rows({{3, 0, 1}, {4, 0, 1}});
  const auto n = col_l2_norms(m);
  EXPECT_FLOAT_EQ(n[0], 5.0f);
  EXPECT_FLOAT_EQ(n[1], 0.0f);
  const std::vector<std::size_t> cols{2, 0};
  EXPECT_EQ(gather_columns(m, cols), Matrix::from_rows({{1, 3}, {1, 4}}));
  EXPECT_EQ(slice_columns(m, 1, 2), Matrix::from_rows({{0, 1}, {0, 1}}));
  const std::vector<std::size_t> rows{1};
  EXPECT_EQ(gather_rows(m, rows), Matrix::from_rows({{4, 0, 1}}));
}

TEST(CosineTest, ParallelAndOrthogonal) {
  const std::vector<float> a{1, 2, 0};
  const std::vector<float> b{2, 4, 0};
  const std::vector<float> c{0, 0, 5};
  EXPECT_NEAR(cosine_similarity(a, b), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(a, c), 0.0, 1e-12);
}

TEST(RngTest, DeterministicAndInRange) {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
  const auto pick = r.choose(10, 4);
  ASSERT_EQ(pick.size(), 4u);
  for (std::size_t i = 1; i < pick.size(); ++i) EXPECT_LT(pick[i - 1], pick[i]);
  EXPECT_NE(mix_seed(5, 1), mix_seed(5, 2));
}

TEST(RngTest, NormalMoments) {
  Rng r(9);
  double sum = 0;
  double sq = 0;
  constexpr int kDraws = 20000;
  for (int i = 0; i < kDraws; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / kDraws, 0.0, 0.03);
  EXPECT_NEAR(sq / kDraws, 1.0, 0.05);
}

}  // namespace
}  // namespace kvspec
