// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kvspec/tensor.hpp"

namespace kvspec {

struct ModelSpec {
  std::size_t layers = 4;
  std::size_t model_dim = 128;
  std::size_t heads = 4;
  std::size_t ffn_dim = 512;
  float ln_eps = 1e-5f;
  std::size_t outlier_channels = 4;
  float outlier_scale = 1.0f;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return heads == 0 ? 0 : model_dim / heads; }

  /// Throws ValidationError when D is not divisible by H, a size is zero,
  /// outlier_channels > D, or outlier_scale < 1.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct LayerWeights {
  Matrix w_q;      // D x D, head h owns columns [h*d, (h+1)*d)
  Matrix w_k;      // D x D
  Matrix w_v;      // D x D
  Matrix w_o;      // D x D
  Matrix ffn_in;   // D x ffn_dim
  Matrix ffn_out;  // ffn_dim x D
  std::vector<float> ln1_gain, ln1_bias;
  std::vector<float> ln2_gain, ln2_bias;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct Model {
  ModelSpec spec;
  std::vector<LayerWeights> layers;
  /// Channel indices (ascending) whose layer-norm gains carry the outlier scale.
  std::vector<std::size_t> outlier_indices;
  bool skewed = false;
  /// Per layer, per head d x d orthogonal skew block; empty unless skewed.
  std::vector<std::vector<Matrix>> skew;

  /// Throws ValidationError if weight shapes disagree with the spec.
  void validate() const;

  friend bool operator==(const Model&, const Model&) = default;
};

// Fixed constants of the synthetic generator.
inline constexpr float kGainNoise = 0.02f;
inline constexpr float kBiasNoise = 0.02f;

/// Deterministic synthetic transformer. Weights are N(0,1) scaled by
/// 1/sqrt(D) (ffn_out by 1/sqrt(ffn_dim)); layer-norm gains are
/// 1 + kGainNoise*N(0,1). A seed-derived set of outlier channels, shared by
/// every layer, has both layer-norm gains multiplied by outlier_scale, while
/// the matching rows of W_V and ffn_in are divided by it so that only the
/// query/key paths see the amplified channels.
Model generate_synthetic(const ModelSpec& spec);

/// Outlier channel indices for a spec (same values generate_synthetic uses).
std::vector<std::size_t> outlier_channel_indices(const ModelSpec& spec);

/// Per-head K and V rows accumulated over the tokens seen so far.
struct HeadCache {
  Matrix keys;    // s x d
  Matrix values;  // s x d
};
using LayerCache = std::vector<HeadCache>;

struct AttentionResult {
  Matrix output;   // rows x d
  Matrix weights;  // rows x s, softmax rows
};

/// softmax(q K^T / sqrt(d)) V. Query row t sits at absolute position
/// (s - q.rows() + t) and attends only to keys at positions <= its own, so a
/// prefill call is causal and a single decode row sees the whole cache.
AttentionResult attention_head(const Matrix& q, const Matrix& keys, const Matrix& values);

/// Columns of one head's query/key/value projections.
struct HeadProjection {
  Matrix q;  // rows x d
  Matrix k;
  Matrix v;
};

/// LN1 of every row: the attention input X_a.
Matrix attention_input(const Matrix& x, const LayerWeights& layer, float eps);

/// Q/K/V of head `head` from attention input `xa`.
HeadProjection project_head(const Matrix& xa, const LayerWeights& layer, std::size_t head,
                            std::size_t head_dim);

/// out = x + attn W_O + FFN(LN2(x + attn W_O)), attn being the concatenated
/// head outputs (rows x D). `attn_out` / `ffn_out`, when non-null, receive the
/// two residual branches.
Matrix finish_block(const Matrix& x, const Matrix& attn_concat, const LayerWeights& layer,
                    float eps, Matrix* attn_out = nullptr, Matrix* ffn_out = nullptr);

/// Internals exposed for tracing.
struct BlockInternals {
  Matrix attention_input;             // X_a = LN1(x)
  std::vector<HeadProjection> heads;  // per head Q, K, V of the new rows
  std::vector<Matrix> weights;        // per head attention weights
  Matrix attn_out;                    // Attn(LN1(x)) after W_O
  Matrix ffn_out;                     // FFN(LN2(x + attn_out))
};

/// One pre-norm transformer block. Appends the new rows' K/V to `cache`
/// (which must hold `heads` entries, empty for prefill) and returns the block
/// output.
Matrix forward_block(const Matrix& x, const LayerWeights& layer, const ModelSpec& spec,
                     LayerCache& cache, BlockInternals* internals = nullptr);

/// Empty per-layer caches for a model.
std::vector<LayerCache> make_caches(const ModelSpec& spec);

/// Runs all blocks over `x`, appending to `caches`. `block_inputs`, when
/// non-null, receives Tblock_in of every layer followed by the final output.
Matrix forward_stack(const Model& model, const Matrix& x, std::vector<LayerCache>& caches,
                     std::vector<Matrix>* block_inputs = nullptr);

/// Prefill then greedy continuous decode without any cache management: the
/// reference trajectory the engine's full-cache scheme must reproduce.
/// Returns the T decode outputs (T x D).
Matrix reference_decode(const Model& model, const Matrix& prompt, std::size_t gen_len);

/// Continuous autoregressive feedback: `output` rescaled to RMS `target_rms`.
std::vector<float> feedback_input(std::span<const float> output, double target_rms);

/// Mean RMS over the rows of `x`.
double mean_row_rms(const Matrix& x);

/// Writes `<path>` (JSON manifest) and `<path>.bin` (raw little-endian f32).
void save_model(const Model& model, const std::filesystem::path& manifest_path);

/// Throws ManifestError, SizeMismatchError, ValidationError or IoError.
Model load_model(const std::filesystem::path& manifest_path);

}  // namespace kvspec
