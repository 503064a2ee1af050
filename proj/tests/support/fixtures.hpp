// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>

#include "kvspec/model.hpp"
#include "kvspec/skewing.hpp"
#include "kvspec/workload.hpp"

namespace kvspec::testing {

inline ModelSpec spec_with(std::uint64_t seed, float outlier_scale) {
  ModelSpec spec;
  spec.seed = seed;
  spec.outlier_scale = outlier_scale;
  return spec;
}

/// Synthetic model skewed with its own calibration sample.
inline Model skewed_model(const ModelSpec& spec) {
  const Model base = generate_synthetic(spec);
  return apply_skew(base, calibrate_skew(base, calibration_input(base, spec.seed)));
}

inline Model skewed_model(std::uint64_t seed, float outlier_scale = kCalibratedOutlierScale) {
  return skewed_model(spec_with(seed, outlier_scale));
}

/// First `n` rows of `m`, then the rest.
inline std::pair<Matrix, Matrix> split_rows(const Matrix& m, std::size_t n) {
  Matrix head(0, m.cols());
  Matrix tail(0, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) (r < n ? head : tail).append_row(m.row(r));
  return {head, tail};
}

}  // namespace kvspec::testing
