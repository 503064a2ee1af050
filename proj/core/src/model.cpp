// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvspec/error.hpp"
#include "kvspec/random.hpp"

namespace kvspec {

namespace {

constexpr std::uint64_t kOutlierStream = 1;

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValidationError(name + " has shape " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
}

void expect_length(const std::vector<float>& v, std::size_t n, const std::string& name) {
  if (v.size() != n) {
    throw ValidationError(name + " has length " + std::to_string(v.size()) + ", expected " +
                          std::to_string(n));
  }
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (float& x : m.data()) x = static_cast<float>(rng.normal() * scale);
  return m;
}

std::vector<float> random_vector(Rng& rng, std::size_t n, double mean, double noise) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(mean + noise * rng.normal());
  return v;
}

}  // namespace

void ModelSpec::validate() const {
  if (layers == 0 || model_dim == 0 || heads == 0 || ffn_dim == 0) {
    throw ValidationError("model spec sizes must be positive");
  }
  if (model_dim % heads != 0) {
    throw ValidationError("model_dim " + std::to_string(model_dim) + " is not divisible by heads " +
                          std::to_string(heads));
  }
  if (outlier_channels > model_dim) {
    throw ValidationError("outlier_channels " + std::to_string(outlier_channels) +
                          " exceeds model_dim " + std::to_string(model_dim));
  }
  if (!(outlier_scale >= 1.0f) || !std::isfinite(outlier_scale)) {
    throw ValidationError("outlier_scale must be finite and >= 1");
  }
  if (!(ln_eps > 0.0f)) throw ValidationError("ln_eps must be positive");
}

void Model::validate() const {
  spec.validate();
  const std::size_t D = spec.model_dim;
  const std::size_t F = spec.ffn_dim;
  if (layers.size() != spec.layers) {
    throw ValidationError("model has " + std::to_string(layers.size()) + " layers, spec says " +
                          std::to_string(spec.layers));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    expect_shape(w.w_q, D, D, p + "w_q");
    expect_shape(w.w_k, D, D, p + "w_k");
    expect_shape(w.w_v, D, D, p + "w_v");
    expect_shape(w.w_o, D, D, p + "w_o");
    expect_shape(w.ffn_in, D, F, p + "ffn_in");
    expect_shape(w.ffn_out, F, D, p + "ffn_out");
    expect_length(w.ln1_gain, D, p + "ln1_gain");
    expect_length(w.ln1_bias, D, p + "ln1_bias");
    expect_length(w.ln2_gain, D, p + "ln2_gain");
    expect_length(w.ln2_bias, D, p + "ln2_bias");
  }
  if (skewed) {
    if (skew.size() != spec.layers) throw ValidationError("skewed model lacks skew blocks");
    for (const auto& per_layer : skew) {
      if (per_layer.size() != spec.heads) throw ValidationError("skew blocks per layer != heads");
      for (const auto& a : per_layer) expect_shape(a, spec.head_dim(), spec.head_dim(), "skew block");
    }
  } else if (!skew.empty()) {
    throw ValidationError("unskewed model carries skew blocks");
  }
  for (std::size_t c : outlier_indices) {
    if (c >= D) throw ValidationError("outlier index out of range");
  }
}

std::vector<std::size_t> outlier_channel_indices(const ModelSpec& spec) {
  Rng rng(mix_seed(spec.seed, kOutlierStream));
  return rng.choose(spec.model_dim, spec.outlier_channels);
}

Model generate_synthetic(const ModelSpec& spec) {
  spec.validate();
  const std::size_t D = spec.model_dim;
  const std::size_t F = spec.ffn_dim;
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(D));
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(F));

  Model model;
  model.spec = spec;
  model.outlier_indices = outlier_channel_indices(spec);

  Rng rng(spec.seed);
  model.layers.reserve(spec.layers);
  for (std::size_t l = 0; l < spec.layers; ++l) {
    LayerWeights w;
    w.w_q = random_matrix(rng, D, D, w_scale);
    w.w_k = random_matrix(rng, D, D, w_scale);
    w.w_v = random_matrix(rng, D, D, w_scale);
    w.w_o = random_matrix(rng, D, D, w_scale);
    w.ffn_in = random_matrix(rng, D, F, w_scale);
    w.ffn_out = random_matrix(rng, F, D, out_scale);
    w.ln1_gain = random_vector(rng, D, 1.0, kGainNoise);
    w.ln1_bias = random_vector(rng, D, 0.0, kBiasNoise);
    w.ln2_gain = random_vector(rng, D, 1.0, kGainNoise);
    w.ln2_bias = random_vector(rng, D, 0.0, kBiasNoise);

    if (spec.outlier_scale != 1.0f) {
      const float s = spec.outlier_scale;
      for (std::size_t c : model.outlier_indices) {
        w.ln1_gain[c] *= s;
        w.ln2_gain[c] *= s;
        for (float& x : w.w_v.row(c)) x /= s;
        for (float& x : w.ffn_in.row(c)) x /= s;
      }
    }
    model.layers.push_back(std::move(w));
  }
  return model;
}

AttentionResult attention_head(const Matrix& q, const Matrix& keys, const Matrix& values) {
  if (keys.rows() == 0) throw InvalidArgument("attention_head: empty key cache");
  if (keys.rows() != values.rows() || keys.cols() != values.cols()) {
    throw InvalidArgument("attention_head: key/value cache shapes differ");
  }
  if (q.cols() != keys.cols()) throw InvalidArgument("attention_head: query width != head dim");
  if (q.rows() > keys.rows()) throw InvalidArgument("attention_head: more queries than cached keys");

  const std::size_t s = keys.rows();
  const std::size_t d = keys.cols();
  const std::size_t offset = s - q.rows();
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));

  AttentionResult res{Matrix(q.rows(), d), Matrix(q.rows(), s)};
  std::vector<float> scores;
  for (std::size_t t = 0; t < q.rows(); ++t) {
    const std::size_t visible = offset + t + 1;
    scores.assign(visible, 0.0f);
    const auto qr = q.row(t);
    for (std::size_t j = 0; j < visible; ++j) {
      const auto kr = keys.row(j);
      float acc = 0.0f;
      for (std::size_t c = 0; c < d; ++c) acc += qr[c] * kr[c];
      scores[j] = acc * inv_sqrt_d;
    }
    const auto w = softmax_row(scores);
    auto out = res.output.row(t);
    for (std::size_t j = 0; j < visible; ++j) {
      res.weights(t, j) = w[j];
      const auto vr = values.row(j);
      for (std::size_t c = 0; c < d; ++c) out[c] += w[j] * vr[c];
    }
  }
  return res;
}

Matrix attention_input(const Matrix& x, const LayerWeights& layer, float eps) {
  return layernorm_rows(x, layer.ln1_gain, layer.ln1_bias, eps);
}

HeadProjection project_head(const Matrix& xa, const LayerWeights& layer, std::size_t head,
                            std::size_t head_dim) {
  const std::size_t begin = head * head_dim;
  return HeadProjection{
      matmul(xa, slice_columns(layer.w_q, begin, head_dim)),
      matmul(xa, slice_columns(layer.w_k, begin, head_dim)),
      matmul(xa, slice_columns(layer.w_v, begin, head_dim)),
  };
}

Matrix finish_block(const Matrix& x, const Matrix& attn_concat, const LayerWeights& layer,
                    float eps, Matrix* attn_out, Matrix* ffn_out) {
  Matrix attn = matmul(attn_concat, layer.w_o);
  Matrix mid = x;
  for (std::size_t i = 0; i < mid.size(); ++i) mid.data()[i] += attn.data()[i];

  Matrix hidden = matmul(layernorm_rows(mid, layer.ln2_gain, layer.ln2_bias, eps), layer.ffn_in);
  for (float& h : hidden.data()) h = std::max(h, 0.0f);
  Matrix ffn = matmul(hidden, layer.ffn_out);

  Matrix out = mid;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += ffn.data()[i];
  if (attn_out) *attn_out = std::move(attn);
  if (ffn_out) *ffn_out = std::move(ffn);
  return out;
}

Matrix forward_block(const Matrix& x, const LayerWeights& layer, const ModelSpec& spec,
                     LayerCache& cache, BlockInternals* internals) {
  const std::size_t D = spec.model_dim;
  const std::size_t d = spec.head_dim();
  if (x.cols() != D) throw InvalidArgument("forward_block: input width != model_dim");
  if (cache.size() != spec.heads) {
    throw InvalidArgument("forward_block: cache has " + std::to_string(cache.size()) +
                          " heads, model has " + std::to_string(spec.heads));
  }
  const std::size_t prior = cache.front().keys.rows();
  for (const auto& hc : cache) {
    if (hc.keys.rows() != prior || hc.values.rows() != prior ||
        (prior > 0 && (hc.keys.cols() != d || hc.values.cols() != d))) {
      throw InvalidArgument("forward_block: inconsistent per-head cache shapes");
    }
  }

  Matrix xa = attention_input(x, layer, spec.ln_eps);
  Matrix concat(x.rows(), D);
  if (internals) {
    internals->heads.clear();
    internals->weights.clear();
  }
  for (std::size_t h = 0; h < spec.heads; ++h) {
    HeadProjection proj = project_head(xa, layer, h, d);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      cache[h].keys.append_row(proj.k.row(r));
      cache[h].values.append_row(proj.v.row(r));
    }
    AttentionResult att = attention_head(proj.q, cache[h].keys, cache[h].values);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto src = att.output.row(r);
      std::copy(src.begin(), src.end(), concat.row(r).begin() + static_cast<std::ptrdiff_t>(h * d));
    }
    if (internals) {
      internals->heads.push_back(std::move(proj));
      internals->weights.push_back(std::move(att.weights));
    }
  }
  if (internals) {
    Matrix out = finish_block(x, concat, layer, spec.ln_eps, &internals->attn_out, &internals->ffn_out);
    internals->attention_input = std::move(xa);
    return out;
  }
  return finish_block(x, concat, layer, spec.ln_eps);
}

std::vector<LayerCache> make_caches(const ModelSpec& spec) {
  return std::vector<LayerCache>(spec.layers, LayerCache(spec.heads));
}

Matrix forward_stack(const Model& model, const Matrix& x, std::vector<LayerCache>& caches,
                     std::vector<Matrix>* block_inputs) {
  if (caches.size() != model.layers.size()) throw InvalidArgument("forward_stack: cache count mismatch");
  Matrix h = x;
  if (block_inputs) block_inputs->clear();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (block_inputs) block_inputs->push_back(h);
    h = forward_block(h, model.layers[l], model.spec, caches[l]);
  }
  if (block_inputs) block_inputs->push_back(h);
  return h;
}

double mean_row_rms(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double ss = 0.0;
    for (float v : x.row(r)) ss += static_cast<double>(v) * v;
    total += std::sqrt(ss / static_cast<double>(x.cols()));
  }
  return total / static_cast<double>(x.rows());
}

std::vector<float> feedback_input(std::span<const float> output, double target_rms) {
  double ss = 0.0;
  for (float v : output) ss += static_cast<double>(v) * v;
  std::vector<float> next(output.begin(), output.end());
  if (ss == 0.0 || output.empty()) return next;
  const double rms = std::sqrt(ss / static_cast<double>(output.size()));
  const float scale = static_cast<float>(target_rms / rms);
  for (float& v : next) v *= scale;
  return next;
}

Matrix reference_decode(const Model& model, const Matrix& prompt, std::size_t gen_len) {
  auto caches = make_caches(model.spec);
  Matrix h = forward_stack(model, prompt, caches);
  const double target = mean_row_rms(prompt);
  Matrix outputs(0, 0);
  std::vector<float> next = feedback_input(h.row(h.rows() - 1), target);
  for (std::size_t t = 0; t < gen_len; ++t) {
    Matrix out = forward_stack(model, Matrix::row_vector(next), caches);
    outputs.append_row(out.row(0));
    next = feedback_input(out.row(0), target);
  }
  return outputs;
}

}  // namespace kvspec
