// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/speculation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kvspec/error.hpp"

namespace kvspec {

namespace {

// Absorbs binary rounding so that e.g. 0.3 * 10 selects 3 columns, not 4.
constexpr double kRatioSlack = 1e-9;

}  // namespace

void SpeculationConfig::validate() const {
  if (!(partial_ratio > 0.0 && partial_ratio <= 1.0)) {
    throw InvalidArgument("partial_ratio must be in (0, 1]");
  }
  if (!(cap_ratio > 0.0 && cap_ratio <= 1.0)) throw InvalidArgument("cap_ratio must be in (0, 1]");
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (min_select < 1) throw InvalidArgument("min_select must be at least 1");
}

std::size_t partial_column_count(double ratio, std::size_t d) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidArgument("partial ratio must be in (0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(d) - kRatioSlack));
  return std::clamp<std::size_t>(k, 1, d);
}

std::vector<std::size_t> build_partial(const Matrix& qt, const Matrix& kt, double ratio) {
  if (qt.rows() != kt.rows() || qt.cols() != kt.cols()) {
    throw InvalidArgument("build_partial: query and key shapes differ");
  }
  if (qt.cols() == 0) throw InvalidArgument("build_partial: zero head dimension");
  const std::size_t d = qt.cols();
  std::vector<float> sums(d, 0.0f);
  for (std::size_t r = 0; r < qt.rows(); ++r) {
    const auto q = qt.row(r);
    const auto k = kt.row(r);
    for (std::size_t c = 0; c < d; ++c) sums[c] += std::abs(q[c]) + std::abs(k[c]);
  }
  auto cols = topk_indices(sums, partial_column_count(ratio, d));
  std::sort(cols.begin(), cols.end());
  return cols;
}

HeadPartial make_head_partial(std::vector<std::size_t> columns, const Matrix& w_q_head,
                              const Matrix& keys) {
  HeadPartial p;
  p.partial_wq = gather_columns(w_q_head, columns);
  p.partial_k = keys.rows() == 0 ? Matrix(0, columns.size()) : gather_columns(keys, columns);
  p.columns = std::move(columns);
  return p;
}

std::vector<std::vector<float>> speculate_scores(std::span<const float> x_a_prev,
                                                 const LayerPartial& layer, std::size_t head_dim) {
  if (layer.empty()) throw InvalidArgument("speculate_scores: no partial artifacts for this layer");
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(head_dim));
  std::vector<std::vector<float>> out;
  out.reserve(layer.size());
  for (const auto& head : layer) {
    if (head.partial_k.rows() == 0) throw InvalidArgument("speculate_scores: empty key cache");
    const std::vector<float> q = vecmat(x_a_prev, head.partial_wq);
    std::vector<float> s(head.partial_k.rows());
    for (std::size_t j = 0; j < s.size(); ++j) {
      const auto k = head.partial_k.row(j);
      float acc = 0.0f;
      for (std::size_t c = 0; c < q.size(); ++c) acc += q[c] * k[c];
      s[j] = acc * inv_sqrt_d;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t selection_size(double mean_count, std::size_t s, const SpeculationConfig& cfg) {
  const std::size_t lo = std::min(cfg.min_select, s);
  const auto capped =
      static_cast<std::size_t>(std::floor(cfg.cap_ratio * static_cast<double>(s) + kRatioSlack));
  const std::size_t hi = std::min(s, std::max(cfg.min_select, capped));
  const auto rounded = static_cast<std::size_t>(std::floor(mean_count + 0.5));
  return std::clamp(rounded, lo, hi);
}

Selection select_tokens(const std::vector<std::vector<float>>& scores, const SpeculationConfig& cfg,
                        std::size_t head_dim, std::size_t bytes_per_element) {
  if (scores.empty() || scores.front().empty()) throw InvalidArgument("select_tokens: no scores");
  const std::size_t s = scores.front().size();
  Selection sel;
  double total = 0.0;
  for (const auto& head : scores) {
    if (head.size() != s) throw InvalidArgument("select_tokens: heads disagree on token count");
    const float top = *std::max_element(head.begin(), head.end());
    const double threshold = static_cast<double>(top) - cfg.alpha;
    const auto c = static_cast<std::size_t>(
        std::count_if(head.begin(), head.end(), [&](float v) { return v > threshold; }));
    sel.counts.push_back(c);
    total += static_cast<double>(c);
  }
  sel.n = selection_size(total / static_cast<double>(scores.size()), s, cfg);
  for (const auto& head : scores) {
    auto idx = topk_indices(head, sel.n);
    std::sort(idx.begin(), idx.end());
    sel.indices.push_back(std::move(idx));
  }
  sel.bytes = scores.size() * sel.n * 2 * head_dim * bytes_per_element;
  return sel;
}

void write_partial_key(HeadPartial& head, std::size_t position, std::span<const float> key_row) {
  std::vector<float> row(head.columns.size());
  for (std::size_t i = 0; i < head.columns.size(); ++i) {
    if (head.columns[i] >= key_row.size()) {
      throw InvalidArgument("write_partial_key: key row shorter than selected columns");
    }
    row[i] = key_row[head.columns[i]];
  }
  if (position == head.partial_k.rows()) {
    head.partial_k.append_row(row);
  } else if (position < head.partial_k.rows()) {
    head.partial_k.set_row(position, row);
  } else {
    throw InternalError("partial key cache has " + std::to_string(head.partial_k.rows()) +
                        " rows but the pool wrote position " + std::to_string(position));
  }
}

}  // namespace kvspec
