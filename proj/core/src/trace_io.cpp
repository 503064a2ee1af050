// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/trace_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "kvspec/error.hpp"

namespace kvspec {

namespace {

using nlohmann::json;

// JSON has no infinity; alpha = inf is the "select everything" setting.
json finite_or_tag(double v) { return std::isinf(v) ? json("inf") : json(v); }

double from_finite_or_tag(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

template <typename T>
void put_if(json& j, const char* key, const std::vector<T>& v) {
  if (!v.empty()) j[key] = v;
}

template <typename T>
std::vector<T> get_or_empty(const json& j, const char* key) {
  return j.contains(key) ? j.at(key).get<std::vector<T>>() : std::vector<T>{};
}

json config_json(const RunConfig& c) {
  json j{{"scheme", to_string(c.scheme)},
         {"prompt_len", c.prompt_len},
         {"gen_len", c.gen_len},
         {"batch", c.batch},
         {"partial_ratio", c.speculation.partial_ratio},
         {"alpha", finite_or_tag(c.speculation.alpha)},
         {"cap_ratio", c.speculation.cap_ratio},
         {"min_select", c.speculation.min_select},
         {"pool_limit", c.pool_limit ? json(*c.pool_limit) : json(nullptr)},
         {"policy", to_string(c.policy)},
         {"h2o_budget", c.h2o_budget},
         {"oracle_tokens", c.oracle_tokens ? json(*c.oracle_tokens) : json(nullptr)},
         {"seed", c.seed},
         {"bytes_per_element", c.bytes_per_element},
         {"record_scores", c.record_scores},
         {"record_attention", c.record_attention}};
  return j;
}

RunConfig config_from(const json& j) {
  RunConfig c;
  c.scheme = parse_scheme(j.at("scheme").get<std::string>());
  c.prompt_len = j.at("prompt_len").get<std::size_t>();
  c.gen_len = j.at("gen_len").get<std::size_t>();
  c.batch = j.at("batch").get<std::size_t>();
  c.speculation.partial_ratio = j.at("partial_ratio").get<double>();
  c.speculation.alpha = from_finite_or_tag(j.at("alpha"));
  c.speculation.cap_ratio = j.at("cap_ratio").get<double>();
  c.speculation.min_select = j.at("min_select").get<std::size_t>();
  if (!j.at("pool_limit").is_null()) c.pool_limit = j.at("pool_limit").get<std::size_t>();
  c.policy = parse_policy(j.at("policy").get<std::string>());
  c.h2o_budget = j.at("h2o_budget").get<double>();
  if (!j.at("oracle_tokens").is_null()) c.oracle_tokens = j.at("oracle_tokens").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.bytes_per_element = j.at("bytes_per_element").get<std::size_t>();
  c.record_scores = j.at("record_scores").get<bool>();
  c.record_attention = j.at("record_attention").get<bool>();
  return c;
}

json spec_json(const ModelSpec& s) {
  return json{{"layers", s.layers},         {"model_dim", s.model_dim},
              {"heads", s.heads},           {"ffn_dim", s.ffn_dim},
              {"ln_eps", s.ln_eps},         {"outlier_channels", s.outlier_channels},
              {"outlier_scale", s.outlier_scale}, {"seed", s.seed}};
}

ModelSpec spec_from(const json& j) {
  ModelSpec s;
  s.layers = j.at("layers").get<std::size_t>();
  s.model_dim = j.at("model_dim").get<std::size_t>();
  s.heads = j.at("heads").get<std::size_t>();
  s.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  s.ln_eps = j.at("ln_eps").get<float>();
  s.outlier_channels = j.at("outlier_channels").get<std::size_t>();
  s.outlier_scale = j.at("outlier_scale").get<float>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json head_json(const HeadRecord& h) {
  json j{{"selected", h.selected}, {"selected_tokens", h.selected_tokens}};
  put_if(j, "speculated_scores", h.speculated_scores);
  put_if(j, "true_scores", h.true_scores);
  put_if(j, "approx_weights", h.approx_weights);
  put_if(j, "full_weights", h.full_weights);
  return j;
}

HeadRecord head_from(const json& j) {
  HeadRecord h;
  h.selected = j.at("selected").get<std::vector<std::size_t>>();
  h.selected_tokens = j.at("selected_tokens").get<std::vector<std::size_t>>();
  h.speculated_scores = get_or_empty<float>(j, "speculated_scores");
  h.true_scores = get_or_empty<float>(j, "true_scores");
  h.approx_weights = get_or_empty<float>(j, "approx_weights");
  h.full_weights = get_or_empty<float>(j, "full_weights");
  return h;
}

json layer_json(const LayerRecord& l) {
  json heads = json::array();
  for (const auto& h : l.heads) heads.push_back(head_json(h));
  return json{{"layer", l.layer},
              {"pool_rows", l.pool_rows},
              {"n_selected", l.n_selected},
              {"bytes", l.bytes},
              {"full_bytes", l.full_bytes},
              {"attention_flops", l.attention_flops},
              {"ffn_flops", l.ffn_flops},
              {"speculation_flops", l.speculation_flops},
              {"evictions", l.evictions},
              {"heads", std::move(heads)}};
}

LayerRecord layer_from(const json& j) {
  LayerRecord l;
  l.layer = j.at("layer").get<std::size_t>();
  l.pool_rows = j.at("pool_rows").get<std::size_t>();
  l.n_selected = j.at("n_selected").get<std::size_t>();
  l.bytes = j.at("bytes").get<double>();
  l.full_bytes = j.at("full_bytes").get<double>();
  l.attention_flops = j.at("attention_flops").get<double>();
  l.ffn_flops = j.at("ffn_flops").get<double>();
  l.speculation_flops = j.at("speculation_flops").get<double>();
  l.evictions = j.at("evictions").get<std::size_t>();
  for (const auto& h : j.at("heads")) l.heads.push_back(head_from(h));
  return l;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<float>(row.begin(), row.end()));
  }
  return json{{"cols", m.cols()}, {"rows", std::move(rows)}};
}

Matrix matrix_from(const json& j) {
  Matrix m(0, j.at("cols").get<std::size_t>());
  for (const auto& r : j.at("rows")) m.append_row(r.get<std::vector<float>>());
  return m;
}

}  // namespace

std::string trace_to_json(const Trace& trace) {
  json seqs = json::array();
  for (const auto& s : trace.sequences) {
    json its = json::array();
    for (const auto& it : s.iterations) {
      json layers = json::array();
      for (const auto& l : it.layers) layers.push_back(layer_json(l));
      its.push_back({{"iteration", it.iteration}, {"layers", std::move(layers)}});
    }
    seqs.push_back({{"prompt_len", s.prompt_len},
                    {"prefill_bytes", s.prefill_bytes},
                    {"outputs", matrix_json(s.outputs)},
                    {"iterations", std::move(its)}});
  }
  json j{{"format", kTraceFormat},
         {"version", kTraceVersion},
         {"scheme", to_string(trace.scheme)},
         {"config", config_json(trace.config)},
         {"spec", spec_json(trace.spec)},
         {"sequences", std::move(seqs)}};
  return j.dump() + '\n';
}

Trace trace_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (!j.is_object() || j.value("format", "") != kTraceFormat) {
      throw ManifestError("not a kvspec trace");
    }
    if (j.at("version").get<int>() != kTraceVersion) throw ManifestError("unsupported trace version");
    Trace t;
    t.scheme = parse_scheme(j.at("scheme").get<std::string>());
    t.config = config_from(j.at("config"));
    t.spec = spec_from(j.at("spec"));
    for (const auto& sj : j.at("sequences")) {
      SequenceTrace s;
      s.prompt_len = sj.at("prompt_len").get<std::size_t>();
      s.prefill_bytes = sj.at("prefill_bytes").get<double>();
      s.outputs = matrix_from(sj.at("outputs"));
      for (const auto& ij : sj.at("iterations")) {
        IterationRecord it;
        it.iteration = ij.at("iteration").get<std::size_t>();
        for (const auto& lj : ij.at("layers")) it.layers.push_back(layer_from(lj));
        s.iterations.push_back(std::move(it));
      }
      t.sequences.push_back(std::move(s));
    }
    return t;
  } catch (const json::exception& e) {
    throw ManifestError(std::string("malformed trace: ") + e.what());
  }
}

void save_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << trace_to_json(trace);
  if (!out) throw IoError("failed writing " + path.string());
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return trace_from_json(ss.str());
}

}  // namespace kvspec
