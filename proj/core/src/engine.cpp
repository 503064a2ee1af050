// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvspec/error.hpp"
#include "kvspec/workload.hpp"

namespace kvspec {

namespace {

std::string context(std::size_t iteration, std::size_t layer) {
  return " (token " + std::to_string(iteration) + ", layer " + std::to_string(layer) + ")";
}

// Concatenates per-head rows into one D-wide row, quantizes it in groups
// along D and splits it back.
std::vector<std::vector<float>> quantize_heads(const std::vector<std::span<const float>>& rows) {
  std::vector<float> joined;
  for (const auto& r : rows) joined.insert(joined.end(), r.begin(), r.end());
  const std::vector<float> q = quantize_roundtrip(joined);
  std::vector<std::vector<float>> out;
  std::size_t at = 0;
  for (const auto& r : rows) {
    out.emplace_back(q.begin() + static_cast<std::ptrdiff_t>(at),
                     q.begin() + static_cast<std::ptrdiff_t>(at + r.size()));
    at += r.size();
  }
  return out;
}

}  // namespace

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kFull:
      return "full";
    case Scheme::kH2o:
      return "h2o";
    case Scheme::kQuant4:
      return "quant4";
    case Scheme::kInfinigen:
      return "infinigen";
    case Scheme::kOracle:
      return "oracle";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (Scheme s : kAllSchemes) {
    if (name == to_string(s)) return s;
  }
  throw InvalidArgument("unknown scheme '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (prompt_len == 0) throw InvalidArgument("prompt_len must be at least 1");
  if (batch == 0) throw InvalidArgument("batch must be at least 1");
  speculation.validate();
  if (pool_limit && *pool_limit == 0) throw InvalidArgument("pool limit must be positive");
  if (pool_limit && scheme == Scheme::kH2o) {
    throw InvalidArgument("h2o manages its own budget; pool limit not supported");
  }
  if (!(h2o_budget > 0.0 && h2o_budget <= 1.0)) throw InvalidArgument("h2o budget must be in (0, 1]");
  if (oracle_tokens && *oracle_tokens == 0) throw InvalidArgument("oracle tokens must be positive");
  if (bytes_per_element == 0) throw InvalidArgument("bytes per element must be positive");
}

Engine::Engine(const Model& model, const RunConfig& config) : model_(model), config_(config) {
  model.validate();
  config.validate();
  if (config.scheme == Scheme::kInfinigen && !model.skewed) {
    throw InvalidArgument("infinigen scheme requires a skewed model");
  }
  const auto& spec = model.spec;
  pools_.resize(spec.layers);
  for (auto& layer : pools_) {
    for (std::size_t h = 0; h < spec.heads; ++h) {
      layer.emplace_back(spec.head_dim(), config.pool_limit, config.policy);
    }
  }
  pending_.resize(spec.layers);
}

const KvPool& Engine::pool(std::size_t layer, std::size_t head) const {
  return pools_.at(layer).at(head);
}

const H2oState& Engine::h2o(std::size_t layer, std::size_t head) const {
  return h2o_.at(layer).at(head);
}

std::size_t Engine::store_token(std::size_t layer, const std::vector<std::span<const float>>& keys,
                                const std::vector<std::span<const float>>& values) {
  auto& pools = pools_[layer];
  std::size_t evictions = 0;
  if (config_.scheme == Scheme::kQuant4) {
    const auto qk = quantize_heads(keys);
    const auto qv = quantize_heads(values);
    for (std::size_t h = 0; h < pools.size(); ++h) {
      const std::size_t before = pools[h].evictions();
      pools[h].append(qk[h], qv[h]);
      evictions += pools[h].evictions() - before;
    }
  } else {
    for (std::size_t h = 0; h < pools.size(); ++h) {
      const std::size_t before = pools[h].evictions();
      pools[h].append(keys[h], values[h]);
      evictions += pools[h].evictions() - before;
    }
  }
  return evictions;
}

std::vector<float> Engine::prefill(const Matrix& prompt) {
  if (prefilled_) throw InvalidArgument("prefill: already done for this sequence");
  const auto& spec = model_.spec;
  if (prompt.rows() == 0 || prompt.cols() != spec.model_dim) {
    throw InvalidArgument("prefill: prompt must be N x " + std::to_string(spec.model_dim));
  }
  const std::size_t n = prompt.rows();
  const std::size_t d = spec.head_dim();

  auto caches = make_caches(spec);
  Matrix x = prompt;
  std::vector<BlockInternals> internals(spec.layers);
  for (std::size_t l = 0; l < spec.layers; ++l) {
    x = forward_block(x, model_.layers[l], spec, caches[l], &internals[l]);
  }

  for (std::size_t l = 0; l < spec.layers; ++l) {
    const auto& bi = internals[l];
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<std::span<const float>> ks;
      std::vector<std::span<const float>> vs;
      for (std::size_t h = 0; h < spec.heads; ++h) {
        ks.push_back(bi.heads[h].k.row(r));
        vs.push_back(bi.heads[h].v.row(r));
      }
      store_token(l, ks, vs);
    }
  }

  if (config_.scheme == Scheme::kH2o) {
    const std::size_t budget = h2o_budget_tokens(config_.h2o_budget, n);
    h2o_.assign(spec.layers, {});
    for (std::size_t l = 0; l < spec.layers; ++l) {
      for (std::size_t h = 0; h < spec.heads; ++h) {
        H2oState state(budget);
        const Matrix& w = internals[l].weights[h];
        std::vector<float> colsum(n, 0.0f);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c <= r; ++c) colsum[c] += w(r, c);
        }
        for (std::size_t t = 0; t < n; ++t) state.admit(t);
        state.step(colsum);
        h2o_[l].push_back(std::move(state));
      }
    }
  }

  if (config_.scheme == Scheme::kInfinigen) {
    partials_.layers.assign(spec.layers, {});
    for (std::size_t l = 1; l < spec.layers; ++l) {
      const auto& bi = internals[l];
      for (std::size_t h = 0; h < spec.heads; ++h) {
        auto cols = build_partial(bi.heads[h].q, bi.heads[h].k, config_.speculation.partial_ratio);
        partials_.layers[l].push_back(make_head_partial(
            std::move(cols), slice_columns(model_.layers[l].w_q, h * d, d), pools_[l][h].keys()));
      }
    }
    for (std::size_t l = 1; l < spec.layers; ++l) {
      for (std::size_t h = 0; h < spec.heads; ++h) {
        HeadPartial* target = &partials_.layers[l][h];
        pools_[l][h].set_listener([target](std::size_t pos, std::span<const float> key) {
          write_partial_key(*target, pos, key);
        });
      }
    }
  }

  if (config_.record_attention) shadow_ = std::move(caches);
  prefill_bytes_ = static_cast<double>(
      kv_bytes(spec.layers, spec.heads, d, n, 1, config_.bytes_per_element));
  tokens_ = n;
  prefilled_ = true;
  const auto last = x.row(n - 1);
  return {last.begin(), last.end()};
}

std::vector<std::size_t> Engine::oracle_rows(const std::vector<float>& scores) const {
  const std::size_t s = scores.size();
  std::size_t n = config_.oracle_tokens ? *config_.oracle_tokens
                                        : h2o_budget_tokens(config_.h2o_budget, s);
  n = std::min(n, s);
  return oracle_select({scores}, n).front();
}

std::vector<float> Engine::decode_step(std::span<const float> x, IterationRecord* record) {
  if (!prefilled_) throw InvalidArgument("decode_step: prefill first");
  const auto& spec = model_.spec;
  if (x.size() != spec.model_dim) throw InvalidArgument("decode_step: input width != model_dim");
  const std::size_t d = spec.head_dim();
  const std::size_t t = tokens_;
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));
  const Scheme scheme = config_.scheme;
  const std::size_t bpe = config_.bytes_per_element;

  Matrix h = Matrix::row_vector(x);
  if (record) record->layers.clear();
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const auto& layer = model_.layers[l];
    LayerRecord rec;
    rec.layer = l;
    rec.pool_rows = pools_[l].front().size();
    rec.full_bytes = static_cast<double>(kv_bytes(1, spec.heads, d, t, 1, bpe));
    rec.ffn_flops = ffn_flops(spec.model_dim, spec.ffn_dim);

    const Matrix xa = attention_input(h, layer, spec.ln_eps);

    if (scheme == Scheme::kInfinigen && l + 1 < spec.layers) {
      Pending next;
      next.scores = speculate_scores(xa.row(0), partials_.layers[l + 1], d);
      next.selection = select_tokens(next.scores, config_.speculation, d, bpe);
      for (const auto& hp : partials_.layers[l + 1]) {
        const double k = static_cast<double>(hp.columns.size());
        rec.speculation_flops += 2.0 * static_cast<double>(spec.model_dim) * k +
                                 2.0 * static_cast<double>(hp.partial_k.rows()) * k;
      }
      pending_[l + 1] = std::move(next);
    }
    const bool speculated = scheme == Scheme::kInfinigen && l >= 1;
    if (speculated && !pending_[l]) throw InternalError("missing speculation" + context(t, l));

    Matrix concat(1, spec.model_dim);
    std::vector<HeadProjection> projections;
    for (std::size_t hd = 0; hd < spec.heads; ++hd) {
      KvPool& pool = pools_[l][hd];
      HeadProjection proj = project_head(xa, layer, hd, d);
      HeadRecord hrec;

      std::vector<float> true_scores;
      if (scheme == Scheme::kOracle || config_.record_scores) {
        const Matrix s = matmul_transposed(proj.q, pool.keys());
        true_scores.assign(s.data().begin(), s.data().end());
        for (float& v : true_scores) v *= inv_sqrt_d;
      }

      std::vector<std::size_t> rows;
      if (speculated) {
        rows = pending_[l]->selection.indices[hd];
      } else if (scheme == Scheme::kOracle) {
        rows = oracle_rows(true_scores);
      } else if (scheme == Scheme::kH2o) {
        rows = h2o_[l][hd].retained();
      } else {
        rows.resize(pool.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
      }
      for (std::size_t r : rows) {
        if (r >= pool.size()) throw InternalError("selected row out of range" + context(t, l));
      }

      auto [keys, values] = pool.fetch(rows);
      keys.append_row(proj.k.row(0));
      values.append_row(proj.v.row(0));
      const AttentionResult att = attention_head(proj.q, keys, values);
      const auto out = att.output.row(0);
      std::copy(out.begin(), out.end(), concat.row(0).begin() + static_cast<std::ptrdiff_t>(hd * d));

      if (scheme == Scheme::kH2o) {
        h2o_[l][hd].admit(t);
        rec.evictions += h2o_[l][hd].step(att.weights.row(0)).size();
      }

      rec.n_selected = std::max(rec.n_selected, rows.size());
      rec.attention_flops += attention_flops(rows.size() + 1, d);
      if (scheme != Scheme::kQuant4) rec.bytes += static_cast<double>(rows.size() * 2 * d * bpe);

      if (record) {
        hrec.selected_tokens.reserve(rows.size());
        for (std::size_t r : rows) hrec.selected_tokens.push_back(pool.token_id(r));
        if (config_.record_scores) {
          hrec.true_scores = std::move(true_scores);
          if (speculated) hrec.speculated_scores = pending_[l]->scores[hd];
        }
        if (config_.record_attention) {
          auto& shadow = shadow_[l][hd];
          shadow.keys.append_row(proj.k.row(0));
          shadow.values.append_row(proj.v.row(0));
          const AttentionResult full = attention_head(proj.q, shadow.keys, shadow.values);
          const auto fw = full.weights.row(0);
          hrec.full_weights.assign(fw.begin(), fw.end());
          hrec.approx_weights.assign(t + 1, 0.0f);
          const auto aw = att.weights.row(0);
          for (std::size_t i = 0; i < rows.size(); ++i) hrec.approx_weights[hrec.selected_tokens[i]] = aw[i];
          hrec.approx_weights[t] = aw[rows.size()];
        }
        hrec.selected = std::move(rows);
        rec.heads.push_back(std::move(hrec));
      }
      projections.push_back(std::move(proj));
    }
    if (config_.record_attention && !record) {
      for (std::size_t hd = 0; hd < spec.heads; ++hd) {
        shadow_[l][hd].keys.append_row(projections[hd].k.row(0));
        shadow_[l][hd].values.append_row(projections[hd].v.row(0));
      }
    }
    if (scheme == Scheme::kQuant4) {
      rec.bytes = static_cast<double>(rec.n_selected * 2 * quantized_bytes(spec.model_dim));
    }

    std::vector<std::span<const float>> ks;
    std::vector<std::span<const float>> vs;
    for (const auto& p : projections) {
      ks.push_back(p.k.row(0));
      vs.push_back(p.v.row(0));
    }
    rec.evictions += store_token(l, ks, vs);
    for (std::size_t hd = 0; hd < spec.heads; ++hd) {
      const std::size_t expect = pools_[l][hd].size();
      if (speculated && partials_.layers[l][hd].partial_k.rows() != expect) {
        throw InternalError("partial key cache out of step with pool" + context(t, l));
      }
    }

    h = finish_block(h, concat, layer, spec.ln_eps);
    if (record) record->layers.push_back(std::move(rec));
  }
  ++tokens_;
  const auto last = h.row(0);
  return {last.begin(), last.end()};
}

SequenceTrace run_sequence(const Model& model, const RunConfig& config, const Matrix& prompt,
                           const Matrix* decode_inputs) {
  if (decode_inputs && decode_inputs->rows() > 0 && decode_inputs->cols() != model.spec.model_dim) {
    throw InvalidArgument("decode inputs must have model_dim columns");
  }
  Engine engine(model, config);
  SequenceTrace seq;
  seq.prompt_len = prompt.rows();
  std::vector<float> last = engine.prefill(prompt);
  seq.prefill_bytes = engine.prefill_bytes();
  seq.outputs = Matrix(0, model.spec.model_dim);

  const double target = mean_row_rms(prompt);
  const std::size_t steps = decode_inputs ? decode_inputs->rows() : config.gen_len;
  for (std::size_t i = 0; i < steps; ++i) {
    std::vector<float> input;
    if (decode_inputs) {
      const auto r = decode_inputs->row(i);
      input.assign(r.begin(), r.end());
    } else {
      input = feedback_input(last, target);
    }
    IterationRecord rec;
    rec.iteration = i;
    last = engine.decode_step(input, &rec);
    seq.outputs.append_row(last);
    seq.iterations.push_back(std::move(rec));
  }
  return seq;
}

Trace run(const Model& model, const RunConfig& config) {
  config.validate();
  Trace trace;
  trace.scheme = config.scheme;
  trace.config = config;
  trace.spec = model.spec;
  for (std::size_t b = 0; b < config.batch; ++b) {
    const Matrix prompt = synthetic_tokens(model, config.prompt_len, config.seed + b);
    trace.sequences.push_back(run_sequence(model, config, prompt));
  }
  return trace;
}

CostTrace cost_trace(const SequenceTrace& seq) {
  CostTrace out;
  for (const auto& it : seq.iterations) {
    std::vector<BlockWork> blocks;
    for (const auto& l : it.layers) {
      blocks.push_back({l.full_bytes, l.bytes, l.attention_flops, l.ffn_flops, l.speculation_flops});
    }
    out.push_back(std::move(blocks));
  }
  return out;
}

ExecutionStyle natural_style(Scheme s) {
  return s == Scheme::kFull ? ExecutionStyle::kPrefetchAll : ExecutionStyle::kSelectivePrefetch;
}

}  // namespace kvspec
