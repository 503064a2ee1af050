// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

// kvspec command-line driver: gen-model, skew, run, bench, report.

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kvspec/cost_model.hpp"
#include "kvspec/engine.hpp"
#include "kvspec/error.hpp"
#include "kvspec/metrics.hpp"
#include "kvspec/model.hpp"
#include "kvspec/skewing.hpp"
#include "kvspec/trace_io.hpp"
#include "kvspec/workload.hpp"

namespace {

using nlohmann::json;
using namespace kvspec;

int emit_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

double parse_alpha(const std::string& text) {
  if (text == "inf" || text == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw InvalidArgument("--alpha must be a number or 'inf'");
  return v;
}

// Row count, or a fraction of the prompt when below 1.
std::optional<std::size_t> parse_pool_limit(const std::string& text, std::size_t prompt_len) {
  if (text.empty()) return std::nullopt;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(v > 0)) throw InvalidArgument("--pool-limit must be a positive count or fraction");
  if (v < 1.0) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(v * static_cast<double>(prompt_len))));
  }
  if (v != std::floor(v)) throw InvalidArgument("--pool-limit row count must be an integer");
  return static_cast<std::size_t>(v);
}

struct RunFlags {
  std::string model;
  std::string scheme = "full";
  std::size_t prompt_len = 256;
  std::size_t gen_len = 32;
  std::size_t batch = 1;
  std::string alpha = "4";
  double partial_ratio = 0.3;
  double cap_ratio = 0.2;
  std::size_t min_select = 1;
  std::string pool_limit;
  std::string policy = "counter";
  double h2o_budget = 0.2;
  std::size_t oracle_tokens = 0;
  std::uint64_t seed = 0;
  std::string cost_config;
  bool record_scores = false;
  bool record_attention = false;
  std::string output;
};

void add_run_flags(CLI::App* app, RunFlags& f, bool with_scheme) {
  app->add_option("--model", f.model, "Model manifest")->required();
  if (with_scheme) {
    app->add_option("--scheme", f.scheme, "full|h2o|quant4|infinigen|oracle")->capture_default_str();
  }
  app->add_option("--prompt-len", f.prompt_len, "Prompt tokens N")->capture_default_str();
  app->add_option("--gen-len", f.gen_len, "Decode iterations T")->capture_default_str();
  app->add_option("--batch", f.batch, "Independent sequences")->capture_default_str();
  app->add_option("--alpha", f.alpha, "Speculation threshold (number or inf)")->capture_default_str();
  app->add_option("--partial-ratio", f.partial_ratio, "Fraction of head columns kept")->capture_default_str();
  app->add_option("--cap-ratio", f.cap_ratio, "Max fraction of tokens fetched")->capture_default_str();
  app->add_option("--min-select", f.min_select, "Min tokens fetched per head")->capture_default_str();
  app->add_option("--pool-limit", f.pool_limit, "Pool rows per layer/head, or fraction of prompt");
  app->add_option("--policy", f.policy, "fifo|lru|counter")->capture_default_str();
  app->add_option("--h2o-budget", f.h2o_budget, "H2O budget as fraction of prompt")->capture_default_str();
  app->add_option("--oracle-tokens", f.oracle_tokens, "Oracle tokens per head (0 = h2o budget)");
  app->add_option("--seed", f.seed, "Prompt seed")->capture_default_str();
  app->add_option("--cost-config", f.cost_config, "JSON cost parameters");
  app->add_flag("--record-scores", f.record_scores, "Keep speculated and true scores");
  app->add_flag("--record-attention", f.record_attention, "Keep approximate and full attention rows");
  app->add_option("-o,--output", f.output, "Output file (default stdout)");
}

RunConfig to_config(const RunFlags& f) {
  RunConfig c;
  c.scheme = parse_scheme(f.scheme);
  c.prompt_len = f.prompt_len;
  c.gen_len = f.gen_len;
  c.batch = f.batch;
  c.speculation.alpha = parse_alpha(f.alpha);
  c.speculation.partial_ratio = f.partial_ratio;
  c.speculation.cap_ratio = f.cap_ratio;
  c.speculation.min_select = f.min_select;
  c.pool_limit = parse_pool_limit(f.pool_limit, f.prompt_len);
  c.policy = parse_policy(f.policy);
  c.h2o_budget = f.h2o_budget;
  if (f.oracle_tokens > 0) c.oracle_tokens = f.oracle_tokens;
  c.seed = f.seed;
  c.record_scores = f.record_scores;
  c.record_attention = f.record_attention;
  c.validate();
  return c;
}

CostParams cost_params(const std::string& path) {
  return path.empty() ? CostParams{} : load_cost_params(path);
}

json summary_json(const TraceSummary& s) {
  json latency = json::object();
  for (const auto& [style, total] : s.latency_s) latency[to_string(style)] = total;
  return json{{"scheme", s.scheme},
              {"total_bytes", s.total_bytes},
              {"full_bytes", s.full_bytes},
              {"byte_ratio", s.full_bytes > 0 ? s.total_bytes / s.full_bytes : 0.0},
              {"mean_cosine", s.mean_cosine ? json(*s.mean_cosine) : json(nullptr)},
              {"mean_recall", s.mean_recall ? json(*s.mean_recall) : json(nullptr)},
              {"latency_s", latency}};
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kvspec: speculative KV-cache prefetching engine and benchmark harness"};
  app.require_subcommand(1);

  ModelSpec gen;
  gen.outlier_scale = kCalibratedOutlierScale;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-model", "Generate a synthetic model");
  gen_cmd->add_option("--layers", gen.layers)->capture_default_str();
  gen_cmd->add_option("--model-dim", gen.model_dim)->capture_default_str();
  gen_cmd->add_option("--heads", gen.heads)->capture_default_str();
  gen_cmd->add_option("--ffn-dim", gen.ffn_dim)->capture_default_str();
  gen_cmd->add_option("--outlier-channels", gen.outlier_channels)->capture_default_str();
  gen_cmd->add_option("--outlier-scale", gen.outlier_scale)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("-o,--output", gen_out, "Manifest path")->required();

  std::string skew_in;
  std::string skew_out;
  std::string skew_report;
  std::uint64_t calib_seed = 0;
  auto* skew_cmd = app.add_subcommand("skew", "Calibrate and apply skewing; prints a verification report");
  skew_cmd->add_option("--model", skew_in, "Unskewed model manifest")->required();
  skew_cmd->add_option("--calib-seed", calib_seed, "Calibration input seed")->capture_default_str();
  skew_cmd->add_option("-o,--output", skew_out, "Skewed model manifest")->required();
  skew_cmd->add_option("--report", skew_report, "Report path (default stdout)");

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run one scheme and write its trace");
  add_run_flags(run_cmd, run_flags, true);

  RunFlags bench_flags;
  bench_flags.record_attention = true;
  bench_flags.record_scores = true;
  std::string bench_schemes = "full,h2o,quant4,infinigen,oracle";
  std::string workload = "synthetic";
  auto* bench_cmd = app.add_subcommand("bench", "Compare schemes on one workload");
  add_run_flags(bench_cmd, bench_flags, false);
  bench_cmd->add_option("--schemes", bench_schemes, "Comma-separated schemes")->capture_default_str();
  bench_cmd->add_option("--workload", workload, "synthetic|shifting")->capture_default_str();

  std::vector<std::string> report_traces;
  std::string report_metrics = "bytes,n_selected,cosine,recall,latency";
  std::string report_csv_path = "report.csv";
  std::string report_json_path = "report.json";
  std::string report_cost;
  auto* report_cmd = app.add_subcommand("report", "Tabulate traces as CSV and JSON");
  report_cmd->add_option("--trace", report_traces, "Trace file (repeatable)")->required();
  report_cmd->add_option("--metrics", report_metrics, "Comma-separated metrics (may be empty)")
      ->capture_default_str();
  report_cmd->add_option("--csv", report_csv_path)->capture_default_str();
  report_cmd->add_option("--json", report_json_path)->capture_default_str();
  report_cmd->add_option("--cost-config", report_cost, "JSON cost parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error("usage", e.what(), 2);
  }

  try {
    if (*gen_cmd) {
      save_model(generate_synthetic(gen), gen_out);
      std::cout << json{{"model", gen_out}, {"payload", gen_out + ".bin"}}.dump() << '\n';
    } else if (*skew_cmd) {
      const Model model = load_model(skew_in);
      const SkewSet skews = calibrate_skew(model, calibration_input(model, calib_seed));
      const Model skewed = apply_skew(model, skews);
      save_model(skewed, skew_out);
      const SkewReport r = verify_skew(model, skewed, skews, synthetic_tokens(model, 128, calib_seed + 1));
      json sig = json::array();
      for (const auto& layer : r.skews.sigma) sig.push_back(layer);
      const json report{{"model", skew_out},
                        {"max_abs_forward_diff", r.max_abs_forward_diff},
                        {"max_abs_score_diff", r.max_abs_score_diff},
                        {"max_orthogonality_error", r.max_orthogonality_error},
                        {"top_column_energy", r.top_column_energy},
                        {"sigma", sig}};
      write_text(skew_report, report.dump(2) + '\n');
    } else if (*run_cmd) {
      const Model model = load_model(run_flags.model);
      const Trace trace = run(model, to_config(run_flags));
      write_text(run_flags.output, trace_to_json(trace));
    } else if (*bench_cmd) {
      const Model model = load_model(bench_flags.model);
      const CostParams params = cost_params(bench_flags.cost_config);
      json results = json::array();
      for (const auto& name : split_list(bench_schemes)) {
        RunFlags f = bench_flags;
        f.scheme = name;
        RunConfig cfg = to_config(f);
        Trace trace;
        if (workload == "synthetic") {
          trace = run(model, cfg);
        } else if (workload == "shifting") {
          trace.scheme = cfg.scheme;
          trace.config = cfg;
          trace.spec = model.spec;
          for (std::size_t b = 0; b < cfg.batch; ++b) {
            ShiftingConfig sc;
            sc.prompt_len = cfg.prompt_len;
            sc.gen_len = cfg.gen_len;
            sc.shift_iteration = std::min<std::size_t>(sc.shift_iteration, cfg.gen_len);
            sc.seed = cfg.seed + b;
            const ShiftingWorkload w = shifting_workload(model, sc);
            trace.sequences.push_back(run_sequence(model, cfg, w.prompt, &w.decode_inputs));
          }
        } else {
          throw InvalidArgument("unknown workload '" + workload + "'");
        }
        results.push_back(summary_json(summarize(trace, params)));
      }
      write_text(bench_flags.output, json{{"workload", workload}, {"schemes", results}}.dump(2) + '\n');
    } else if (*report_cmd) {
      const auto metrics = split_list(report_metrics);
      validate_metrics(metrics);
      std::vector<Trace> traces;
      for (const auto& p : report_traces) traces.push_back(load_trace(p));
      write_report(report_rows(traces, cost_params(report_cost)), metrics, report_csv_path, report_json_path);
    }
  } catch (const Error& e) {
    return emit_error(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return emit_error("internal", e.what(), 1);
  }
  return 0;
}
