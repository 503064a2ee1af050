// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kvspec/cost_model.hpp"
#include "kvspec/engine.hpp"

namespace kvspec {

/// Cosine between an approximate weight row (zeros where not attended) and
/// the full-cache row. Throws InvalidArgument on length mismatch.
double attention_cosine_row(std::span<const float> approx, std::span<const float> full);

/// Per iteration, the mean attention cosine over the chosen layers (all when
/// empty) and every head. Requires a trace recorded with record_attention.
std::vector<double> attention_cosine(const SequenceTrace& seq, std::span<const std::size_t> layers = {});

/// Smallest number of largest weights whose sum reaches tau (0 < tau <= 1).
std::size_t tokens_to_cumulative_mass(std::span<const float> weights, double tau);

/// Share of `oracle` found in `selected`; 1 when both are empty.
double recall_at_oracle(std::span<const std::size_t> selected, std::span<const std::size_t> oracle);

/// Recall of a head's selection against the top-n of its true scores, with n
/// the selection size. Empty when the record carries no true scores.
std::optional<double> head_recall(const HeadRecord& head, std::size_t pool_rows);

/// Mean head recall over layers >= 1 of every iteration (speculated layers).
std::optional<double> mean_speculation_recall(const SequenceTrace& seq);

/// Whole-run aggregates of one trace.
struct TraceSummary {
  std::string scheme;
  double total_bytes = 0;
  double full_bytes = 0;
  std::optional<double> mean_cosine;  // over iterations, layers and heads
  std::optional<double> mean_recall;  // speculated layers only
  std::vector<std::pair<ExecutionStyle, double>> latency_s;  // total per style
};

TraceSummary summarize(const Trace& trace, const CostParams& params);

/// Known report metric names, in column order.
inline const std::vector<std::string> kReportMetrics{"bytes", "n_selected", "cosine", "recall",
                                                      "latency"};

struct ReportRow {
  std::string scheme;
  std::size_t sequence = 0;
  std::size_t iteration = 0;
  std::size_t layer = 0;
  double bytes = 0;
  std::size_t n_selected = 0;
  std::optional<double> cosine;
  std::optional<double> recall;
  BlockLatency latency;
};

/// One row per (trace, sequence, iteration, layer), in that order. Latency
/// comes from simulate_run under the scheme's natural execution style.
std::vector<ReportRow> report_rows(const std::vector<Trace>& traces, const CostParams& params);

/// Throws InvalidArgument for names outside kReportMetrics.
void validate_metrics(const std::vector<std::string>& metrics);

/// CSV with scheme, sequence, iteration, layer and then the requested metric
/// columns ("latency" expands to load_s, attention_s, ffn_s, exposed_s).
/// An empty metric list yields the header line only.
std::string report_csv(const std::vector<ReportRow>& rows, const std::vector<std::string>& metrics);

/// Same content as JSON: {"metrics", "rows", "total_bytes": {scheme: bytes}}.
std::string report_json(const std::vector<ReportRow>& rows, const std::vector<std::string>& metrics);

/// Writes both files.
void write_report(const std::vector<ReportRow>& rows, const std::vector<std::string>& metrics,
                  const std::filesystem::path& csv_path, const std::filesystem::path& json_path);

}  // namespace kvspec
