// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvspec/baselines.hpp"
#include "kvspec/cost_model.hpp"
#include "kvspec/kv_pool.hpp"
#include "kvspec/model.hpp"
#include "kvspec/speculation.hpp"

namespace kvspec {

enum class Scheme { kFull, kH2o, kQuant4, kInfinigen, kOracle };

std::string to_string(Scheme s);
/// Accepts "full", "h2o", "quant4", "infinigen" and "oracle".
Scheme parse_scheme(std::string_view name);
inline constexpr Scheme kAllSchemes[] = {Scheme::kFull, Scheme::kH2o, Scheme::kQuant4,
                                         Scheme::kInfinigen, Scheme::kOracle};

struct RunConfig {
  Scheme scheme = Scheme::kFull;
  std::size_t prompt_len = 256;
  std::size_t gen_len = 32;
  std::size_t batch = 1;
  SpeculationConfig speculation;
  std::optional<std::size_t> pool_limit;  // rows per layer/head; unset = unbounded
  EvictionPolicy policy = EvictionPolicy::kCounter;
  double h2o_budget = 0.2;  // fraction of prompt_len
  /// Oracle tokens per head; unset = floor(h2o_budget * pool size).
  std::optional<std::size_t> oracle_tokens;
  std::uint64_t seed = 0;
  std::size_t bytes_per_element = 2;
  bool record_scores = false;     // speculated and true scores per head
  bool record_attention = false;  // approximate and full-cache weight rows

  /// Throws InvalidArgument on out-of-range settings.
  void validate() const;
};

struct HeadRecord {
  std::vector<std::size_t> selected;         // pool rows attended (ascending)
  std::vector<std::size_t> selected_tokens;  // token ids of those rows
  std::vector<float> speculated_scores;      // over pool rows (infinigen, layers >= 1)
  std::vector<float> true_scores;            // over pool rows
  std::vector<float> approx_weights;         // over token ids 0..t, zero where not attended
  std::vector<float> full_weights;           // over token ids 0..t, full-cache attention
};

struct LayerRecord {
  std::size_t layer = 0;
  std::size_t pool_rows = 0;   // before this iteration's append
  std::size_t n_selected = 0;  // per head (equal across heads)
  double bytes = 0;            // moved for this block by the scheme
  double full_bytes = 0;       // whole cache of this block
  double attention_flops = 0;
  double ffn_flops = 0;
  double speculation_flops = 0;  // issued here for the next block
  std::size_t evictions = 0;     // pool or H2O evictions in this step
  std::vector<HeadRecord> heads;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::vector<LayerRecord> layers;
};

struct SequenceTrace {
  std::size_t prompt_len = 0;
  double prefill_bytes = 0;
  std::vector<IterationRecord> iterations;
  Matrix outputs;  // T x D block-stack outputs
};

struct Trace {
  Scheme scheme = Scheme::kFull;
  RunConfig config;
  ModelSpec spec;
  std::vector<SequenceTrace> sequences;
};

/// Decoding state of one sequence.
class Engine {
 public:
  /// Throws InvalidArgument if the scheme is infinigen and the model is not
  /// skewed. Keeps a reference to `model`.
  Engine(const Model& model, const RunConfig& config);
  // Pools hold listeners that point into this object.
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Full causal attention over the prompt; fills pools, builds partial
  /// artifacts and H2O state. Returns the last block-stack output row.
  std::vector<float> prefill(const Matrix& prompt);

  /// One decode iteration with input token `x` (length D).
  std::vector<float> decode_step(std::span<const float> x, IterationRecord* record = nullptr);

  const KvPool& pool(std::size_t layer, std::size_t head) const;
  const PartialArtifacts& partials() const noexcept { return partials_; }
  const H2oState& h2o(std::size_t layer, std::size_t head) const;
  std::size_t tokens() const noexcept { return tokens_; }
  double prefill_bytes() const noexcept { return prefill_bytes_; }

 private:
  struct Pending {
    Selection selection;
    std::vector<std::vector<float>> scores;
  };

  std::vector<std::size_t> oracle_rows(const std::vector<float>& scores) const;
  /// Appends one token's per-head K/V rows to a layer's pools.
  std::size_t store_token(std::size_t layer, const std::vector<std::span<const float>>& keys,
                          const std::vector<std::span<const float>>& values);

  const Model& model_;
  RunConfig config_;
  std::vector<std::vector<KvPool>> pools_;  // [layer][head]
  PartialArtifacts partials_;
  std::vector<std::vector<H2oState>> h2o_;
  std::vector<LayerCache> shadow_;  // exact full cache, kept when recording attention
  std::vector<std::optional<Pending>> pending_;  // [layer], set one block ahead
  std::size_t tokens_ = 0;
  double prefill_bytes_ = 0;
  bool prefilled_ = false;
};

/// Prefill plus decode. With `decode_inputs` the iterations consume its rows
/// (gen_len is ignored); otherwise each input is the previous output rescaled
/// to the prompt's mean row RMS.
SequenceTrace run_sequence(const Model& model, const RunConfig& config, const Matrix& prompt,
                           const Matrix* decode_inputs = nullptr);

/// `batch` independent sequences; sequence b uses synthetic_tokens with
/// seed + b as its prompt.
Trace run(const Model& model, const RunConfig& config);

/// Per-block work of a sequence for the cost model.
CostTrace cost_trace(const SequenceTrace& seq);

/// The execution style under which a scheme is normally timed.
ExecutionStyle natural_style(Scheme s);

}  // namespace kvspec
