// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvspec/error.hpp"
#include "kvspec/tensor.hpp"

namespace kvspec {

H2oState::H2oState(std::size_t budget) : H2oState(budget, budget / 2) {}

H2oState::H2oState(std::size_t budget, std::size_t recent_window)
    : budget_(budget), recent_window_(recent_window) {
  if (budget == 0) throw InvalidArgument("H2oState: budget must be positive");
  if (recent_window >= budget) throw InvalidArgument("H2oState: recent window must be below budget");
}

void H2oState::admit(std::size_t token) {
  if (!tokens_.empty() && token <= tokens_.back()) {
    throw InvalidArgument("H2oState::admit: tokens must arrive in increasing order");
  }
  tokens_.push_back(token);
  acc_.push_back(0.0);
}

std::vector<std::size_t> H2oState::step(std::span<const float> weights) {
  if (weights.size() != tokens_.size()) {
    throw InvalidArgument("H2oState::step: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(tokens_.size()) + " retained tokens");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) acc_[i] += weights[i];
  return compress();
}

std::vector<std::size_t> H2oState::compress() {
  std::vector<std::size_t> out;
  while (tokens_.size() > budget_) {
    const std::size_t candidates = tokens_.size() - recent_window_;
    std::size_t victim = 0;
    for (std::size_t i = 1; i < candidates; ++i) {
      if (acc_[i] < acc_[victim]) victim = i;
    }
    out.push_back(tokens_[victim]);
    evicted_.push_back(tokens_[victim]);
    tokens_.erase(tokens_.begin() + static_cast<std::ptrdiff_t>(victim));
    acc_.erase(acc_.begin() + static_cast<std::ptrdiff_t>(victim));
  }
  return out;
}

std::size_t h2o_budget_tokens(double fraction, std::size_t tokens) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("h2o budget must be in (0, 1]");
  const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(tokens) + 1e-9));
  return std::max<std::size_t>(n, 1);
}

QuantGroup quantize_group(std::span<const float> x) {
  if (x.empty()) throw InvalidArgument("quantize_group: empty group");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  QuantGroup g;
  g.zero = *lo;
  g.scale = (*hi - *lo) / 15.0f;
  g.codes.resize(x.size(), 0);
  if (g.scale > 0.0f) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float q = std::round((x[i] - g.zero) / g.scale);
      g.codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0f, 15.0f));
    }
  }
  return g;
}

std::vector<float> dequantize_group(const QuantGroup& g) {
  std::vector<float> out(g.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(g.codes[i]) * g.scale + g.zero;
  return out;
}

std::vector<float> quantize_roundtrip(std::span<const float> row, std::size_t group) {
  if (group == 0) throw InvalidArgument("quantize_roundtrip: group size must be positive");
  std::vector<float> out;
  out.reserve(row.size());
  for (std::size_t begin = 0; begin < row.size(); begin += group) {
    const auto part = dequantize_group(quantize_group(row.subspan(begin, std::min(group, row.size() - begin))));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::size_t quantized_bytes(std::size_t elements, std::size_t group) {
  if (group == 0) throw InvalidArgument("quantized_bytes: group size must be positive");
  return (elements + 1) / 2 + kQuantGroupOverheadBytes * ((elements + group - 1) / group);
}

std::vector<std::vector<std::size_t>> oracle_select(const std::vector<std::vector<float>>& scores,
                                                    std::size_t n) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(scores.size());
  for (const auto& head : scores) {
    if (n > head.size()) throw InvalidArgument("oracle_select: n exceeds token count");
    auto idx = topk_indices(head, n);
    std::sort(idx.begin(), idx.end());
    out.push_back(std::move(idx));
  }
  return out;
}

}  // namespace kvspec
