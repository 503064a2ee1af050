// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "kvspec/model.hpp"
#include "kvspec/tensor.hpp"

namespace kvspec {

/// Per layer, per head orthogonal skew blocks and the calibration singular
/// values they were derived from.
struct SkewSet {
  std::vector<std::vector<Matrix>> a;                   // [layer][head], d x d
  std::vector<std::vector<std::vector<float>>> sigma;  // [layer][head], length d, descending
};

/// Runs `sample` (N x D, N >= 2) through the unskewed model and sets each
/// head's A to the right singular vectors of its N x d query slice. When
/// N < d the slice is zero-padded, which leaves V and sigma intact and fills
/// the null space.
SkewSet calibrate_skew(const Model& model, const Matrix& sample);

/// Right-multiplies every head's W_Q and W_K column block by its A. The
/// result computes the same attention scores and outputs.
Model apply_skew(const Model& model, const SkewSet& skews);

struct SkewReport {
  float max_abs_forward_diff = 0.0f;  // over all block outputs on the probe
  float max_abs_score_diff = 0.0f;    // per-head Q K^T (double products), all layers
  float max_orthogonality_error = 0.0f;
  /// Per layer: fraction of calibration query energy in the top ceil(0.3 d)
  /// skewed columns, averaged over heads.
  std::vector<double> top_column_energy;
  SkewSet skews;
};

/// Compares `original` and `skewed` on `probe` (N x D).
SkewReport verify_skew(const Model& original, const Model& skewed, const SkewSet& skews,
                       const Matrix& probe);

}  // namespace kvspec
