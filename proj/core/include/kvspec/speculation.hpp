// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kvspec/tensor.hpp"

namespace kvspec {

struct SpeculationConfig {
  double partial_ratio = 0.3;
  double alpha = 4.0;      // may be +infinity
  double cap_ratio = 0.2;
  std::size_t min_select = 1;

  /// Throws InvalidArgument unless ratio and cap are in (0, 1], alpha > 0 and
  /// min_select >= 1.
  void validate() const;
};

/// Speculation state of one head of one layer.
struct HeadPartial {
  std::vector<std::size_t> columns;  // ascending, subset of [0, d)
  Matrix partial_wq;                 // D x k: skewed W_Q head columns
  Matrix partial_k;                  // s x k: skewed key cache columns, row j = pool row j
};
using LayerPartial = std::vector<HeadPartial>;

/// Index 0 is always empty: layer 0 is never speculated.
struct PartialArtifacts {
  std::vector<LayerPartial> layers;
};

/// k = ceil(ratio * d), at least 1.
std::size_t partial_column_count(double ratio, std::size_t d);

/// Column selection from the prefill's skewed queries and keys (both N x d):
/// the k columns with the largest sums of |qt| + |kt|, returned ascending.
std::vector<std::size_t> build_partial(const Matrix& qt, const Matrix& kt, double ratio);

/// Materializes a head's partial weight and partial key cache.
HeadPartial make_head_partial(std::vector<std::size_t> columns, const Matrix& w_q_head,
                              const Matrix& keys);

/// Rehearses a layer's attention: per head (x_a_prev * partial_wq) *
/// partial_k^T / sqrt(head_dim).
std::vector<std::vector<float>> speculate_scores(std::span<const float> x_a_prev,
                                                 const LayerPartial& layer, std::size_t head_dim);

struct Selection {
  std::size_t n = 0;
  std::vector<std::size_t> counts;                // per head tokens above the threshold
  std::vector<std::vector<std::size_t>> indices;  // per head, ascending, size n
  std::size_t bytes = 0;                          // sum over heads of n * 2 * d * bpe
};

/// Number of tokens every head fetches given the mean above-threshold count
/// and `s` candidates: round half-up, then clamp to
/// [min(min_select, s), min(s, max(min_select, floor(cap * s)))].
std::size_t selection_size(double mean_count, std::size_t s, const SpeculationConfig& cfg);

/// Alpha-threshold selection over per-head scores of equal length.
Selection select_tokens(const std::vector<std::vector<float>>& scores, const SpeculationConfig& cfg,
                        std::size_t head_dim, std::size_t bytes_per_element);

/// Mirrors a pool write into the partial key cache. `position` must equal the
/// current row count (append) or address an existing row (overwrite).
void write_partial_key(HeadPartial& head, std::size_t position, std::span<const float> key_row);

}  // namespace kvspec
