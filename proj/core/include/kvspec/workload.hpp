// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kvspec/model.hpp"
#include "kvspec/tensor.hpp"

namespace kvspec {

/// Smallest swept outlier_scale meeting the input-similarity and speculation
/// targets (sweep over {1, 2, 5, 10, 20}; see README).
inline constexpr float kCalibratedOutlierScale = 10.0f;

/// Standard deviation of synthetic token entries.
inline constexpr double kTokenScale = 3.0;

/// Residual-stream offset carried by outlier channels: (s - 1) * kTokenScale.
double outlier_offset(const ModelSpec& spec);

/// `n` synthetic tokens: N(0, kTokenScale^2) entries plus outlier_offset on
/// the model's outlier channels.
Matrix synthetic_tokens(const Model& model, std::size_t n, std::uint64_t seed);

/// Calibration sample for skewing: 4 * head_dim synthetic tokens.
Matrix calibration_input(const Model& model, std::uint64_t seed);

struct ShiftingConfig {
  std::size_t prompt_len = 256;
  std::size_t gen_len = 48;
  std::size_t shift_iteration = 16;  // B
  std::vector<std::size_t> planted_tokens{3, 4, 5, 6};
  double plant_strength = 8.0;
  std::uint64_t seed = 0;
};

/// Decode inputs whose attention target moves at iteration B.
///
/// Before B the decode tokens carry the model's regular outlier offset. From
/// B on, every odd-indexed outlier channel flips sign (a lone channel simply
/// flips). The planted prompt tokens get a push along the key-space direction
/// favoured by the post-shift queries, projected away from the pre-shift
/// query directions, so they earn little attention early and much later.
struct ShiftingWorkload {
  Matrix prompt;         // prompt_len x D
  Matrix decode_inputs;  // gen_len x D
  std::size_t shift_iteration = 0;
  std::vector<std::size_t> planted_tokens;
};

ShiftingWorkload shifting_workload(const Model& model, const ShiftingConfig& cfg);

}  // namespace kvspec
