// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

#include "kvspec/error.hpp"
#include "kvspec/tensor.hpp"

namespace kvspec {

namespace {

bool wants(const std::vector<std::string>& metrics, const std::string& name) {
  return std::find(metrics.begin(), metrics.end(), name) != metrics.end();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::optional<double> mean_over_heads(const LayerRecord& layer,
                                      const std::function<std::optional<double>(const HeadRecord&)>& f) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& h : layer.heads) {
    if (const auto v = f(h)) {
      total += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

std::optional<double> layer_cosine(const LayerRecord& layer) {
  return mean_over_heads(layer, [](const HeadRecord& h) -> std::optional<double> {
    if (h.full_weights.empty()) return std::nullopt;
    return attention_cosine_row(h.approx_weights, h.full_weights);
  });
}

std::optional<double> layer_recall(const LayerRecord& layer) {
  return mean_over_heads(layer, [&](const HeadRecord& h) { return head_recall(h, layer.pool_rows); });
}

}  // namespace

double attention_cosine_row(std::span<const float> approx, std::span<const float> full) {
  if (approx.size() != full.size()) throw InvalidArgument("attention_cosine: row lengths differ");
  return cosine_similarity(approx, full);
}

std::vector<double> attention_cosine(const SequenceTrace& seq, std::span<const std::size_t> layers) {
  std::vector<double> out;
  for (const auto& it : seq.iterations) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& l : it.layers) {
      if (!layers.empty() && std::find(layers.begin(), layers.end(), l.layer) == layers.end()) continue;
      for (const auto& h : l.heads) {
        if (h.full_weights.empty()) throw InvalidArgument("attention_cosine: trace lacks attention rows");
        total += attention_cosine_row(h.approx_weights, h.full_weights);
        ++count;
      }
    }
    out.push_back(count ? total / static_cast<double>(count) : 0.0);
  }
  return out;
}

std::size_t tokens_to_cumulative_mass(std::span<const float> weights, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("tokens_to_cumulative_mass: tau must be in (0, 1]");
  std::vector<float> sorted(weights.begin(), weights.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double mass = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    mass += sorted[i];
    // Float rows that should sum to 1 may fall short by rounding.
    if (mass >= tau - 1e-9) return i + 1;
  }
  return sorted.size();
}

double recall_at_oracle(std::span<const std::size_t> selected, std::span<const std::size_t> oracle) {
  if (oracle.empty()) return selected.empty() ? 1.0 : 0.0;
  std::vector<std::size_t> a(selected.begin(), selected.end());
  std::vector<std::size_t> b(oracle.begin(), oracle.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(b.size());
}

std::optional<double> head_recall(const HeadRecord& head, std::size_t pool_rows) {
  if (head.true_scores.empty() || head.true_scores.size() != pool_rows) return std::nullopt;
  const auto oracle = topk_indices(head.true_scores, head.selected.size());
  return recall_at_oracle(head.selected, oracle);
}

std::optional<double> mean_speculation_recall(const SequenceTrace& seq) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& it : seq.iterations) {
    for (const auto& l : it.layers) {
      if (l.layer == 0) continue;
      if (const auto r = layer_recall(l)) {
        total += *r;
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

TraceSummary summarize(const Trace& trace, const CostParams& params) {
  TraceSummary out;
  out.scheme = to_string(trace.scheme);
  double cos_total = 0.0;
  std::size_t cos_count = 0;
  double rec_total = 0.0;
  std::size_t rec_count = 0;
  for (ExecutionStyle style : kAllStyles) out.latency_s.emplace_back(style, 0.0);
  for (const auto& seq : trace.sequences) {
    for (const auto& it : seq.iterations) {
      for (const auto& l : it.layers) {
        out.total_bytes += l.bytes;
        out.full_bytes += l.full_bytes;
        for (const auto& h : l.heads) {
          if (!h.full_weights.empty()) {
            cos_total += attention_cosine_row(h.approx_weights, h.full_weights);
            ++cos_count;
          }
        }
      }
    }
    if (const auto r = mean_speculation_recall(seq)) {
      rec_total += *r;
      ++rec_count;
    }
    const CostTrace ct = cost_trace(seq);
    for (auto& [style, total] : out.latency_s) total += simulate_run(ct, style, params).total_s;
  }
  if (cos_count) out.mean_cosine = cos_total / static_cast<double>(cos_count);
  if (rec_count) out.mean_recall = rec_total / static_cast<double>(rec_count);
  return out;
}

std::vector<ReportRow> report_rows(const std::vector<Trace>& traces, const CostParams& params) {
  std::vector<ReportRow> rows;
  for (const auto& trace : traces) {
    for (std::size_t s = 0; s < trace.sequences.size(); ++s) {
      const auto& seq = trace.sequences[s];
      const LatencyBreakdown lat = simulate_run(cost_trace(seq), natural_style(trace.scheme), params);
      for (std::size_t i = 0; i < seq.iterations.size(); ++i) {
        for (std::size_t l = 0; l < seq.iterations[i].layers.size(); ++l) {
          const auto& layer = seq.iterations[i].layers[l];
          ReportRow r;
          r.scheme = to_string(trace.scheme);
          r.sequence = s;
          r.iteration = seq.iterations[i].iteration;
          r.layer = layer.layer;
          r.bytes = layer.bytes;
          r.n_selected = layer.n_selected;
          r.cosine = layer_cosine(layer);
          r.recall = layer_recall(layer);
          r.latency = lat.iterations[i].blocks[l];
          rows.push_back(std::move(r));
        }
      }
    }
  }
  return rows;
}

void validate_metrics(const std::vector<std::string>& metrics) {
  for (const auto& m : metrics) {
    if (!wants(kReportMetrics, m)) throw InvalidArgument("unknown metric '" + m + "'");
  }
}

std::string report_csv(const std::vector<ReportRow>& rows, const std::vector<std::string>& metrics) {
  validate_metrics(metrics);
  std::string out = "scheme,sequence,iteration,layer";
  for (const auto& m : kReportMetrics) {
    if (!wants(metrics, m)) continue;
    out += m == "latency" ? ",load_s,attention_s,ffn_s,exposed_s" : "," + m;
  }
  out += '\n';
  if (metrics.empty()) return out;
  for (const auto& r : rows) {
    out += r.scheme + ',' + std::to_string(r.sequence) + ',' + std::to_string(r.iteration) + ',' +
           std::to_string(r.layer);
    for (const auto& m : kReportMetrics) {
      if (!wants(metrics, m)) continue;
      if (m == "bytes") out += ',' + num(r.bytes);
      if (m == "n_selected") out += ',' + std::to_string(r.n_selected);
      if (m == "cosine") out += ',' + (r.cosine ? num(*r.cosine) : std::string());
      if (m == "recall") out += ',' + (r.recall ? num(*r.recall) : std::string());
      if (m == "latency") {
        out += ',' + num(r.latency.load_s) + ',' + num(r.latency.attention_s) + ',' +
               num(r.latency.ffn_s) + ',' + num(r.latency.exposed_transfer_s);
      }
    }
    out += '\n';
  }
  return out;
}

std::string report_json(const std::vector<ReportRow>& rows, const std::vector<std::string>& metrics) {
  validate_metrics(metrics);
  using nlohmann::json;
  json jrows = json::array();
  std::map<std::string, double> totals;
  if (!metrics.empty()) {
    for (const auto& r : rows) {
      json j{{"scheme", r.scheme}, {"sequence", r.sequence}, {"iteration", r.iteration}, {"layer", r.layer}};
      if (wants(metrics, "bytes")) j["bytes"] = r.bytes;
      if (wants(metrics, "n_selected")) j["n_selected"] = r.n_selected;
      if (wants(metrics, "cosine")) j["cosine"] = r.cosine ? json(*r.cosine) : json(nullptr);
      if (wants(metrics, "recall")) j["recall"] = r.recall ? json(*r.recall) : json(nullptr);
      if (wants(metrics, "latency")) {
        j["load_s"] = r.latency.load_s;
        j["attention_s"] = r.latency.attention_s;
        j["ffn_s"] = r.latency.ffn_s;
        j["exposed_s"] = r.latency.exposed_transfer_s;
      }
      jrows.push_back(std::move(j));
    }
  }
  for (const auto& r : rows) totals[r.scheme] += r.bytes;
  json out{{"metrics", metrics}, {"rows", std::move(jrows)}, {"total_bytes", totals}};
  return out.dump(2) + '\n';
}

void write_report(const std::vector<ReportRow>& rows, const std::vector<std::string>& metrics,
                  const std::filesystem::path& csv_path, const std::filesystem::path& json_path) {
  const std::string csv = report_csv(rows, metrics);
  const std::string js = report_json(rows, metrics);
  std::ofstream c(csv_path, std::ios::trunc);
  if (!c) throw IoError("cannot open " + csv_path.string());
  c << csv;
  std::ofstream j(json_path, std::ios::trunc);
  if (!j) throw IoError("cannot open " + json_path.string());
  j << js;
  if (!c || !j) throw IoError("failed writing report files");
}

}  // namespace kvspec
