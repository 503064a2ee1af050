// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/workload.hpp"

#include <cmath>

#include "kvspec/error.hpp"
#include "kvspec/random.hpp"

namespace kvspec {

namespace {

constexpr std::uint64_t kCalibrationStream = 11;
constexpr std::uint64_t kPromptStream = 12;
constexpr std::uint64_t kPhaseOneStream = 13;
constexpr std::uint64_t kPhaseTwoStream = 14;

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(Vec& v) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) return;
  for (double& x : v) x /= n;
}

Matrix tokens_with_offsets(const Model& model, std::size_t n, std::uint64_t seed,
                           const std::vector<double>& offsets) {
  Rng rng(seed);
  Matrix x(n, model.spec.model_dim);
  for (float& v : x.data()) v = static_cast<float>(kTokenScale * rng.normal());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < model.outlier_indices.size(); ++i) {
      x(r, model.outlier_indices[i]) += static_cast<float>(offsets[i]);
    }
  }
  return x;
}

// Per layer, the residual-stream direction that raises the attention score a
// token receives from a query built out of `offsets` alone. Outlier channels
// are zeroed so the direction lives in the ordinary channels.
std::vector<Vec> score_functionals(const Model& model, const std::vector<double>& offsets) {
  const std::size_t D = model.spec.model_dim;
  const std::size_t d = model.spec.head_dim();
  Matrix x(1, D);
  for (std::size_t i = 0; i < model.outlier_indices.size(); ++i) {
    x(0, model.outlier_indices[i]) = static_cast<float>(offsets[i]);
  }
  std::vector<Vec> out;
  for (const auto& layer : model.layers) {
    const Matrix xa = attention_input(x, layer, model.spec.ln_eps);
    Vec g(D, 0.0);
    for (std::size_t h = 0; h < model.spec.heads; ++h) {
      const HeadProjection p = project_head(xa, layer, h, d);
      for (std::size_t r = 0; r < D; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += static_cast<double>(layer.w_k(r, h * d + c)) * p.q(0, c);
        g[r] += acc / std::sqrt(static_cast<double>(d));
      }
    }
    for (std::size_t c : model.outlier_indices) g[c] = 0.0;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

double outlier_offset(const ModelSpec& spec) {
  return (static_cast<double>(spec.outlier_scale) - 1.0) * kTokenScale;
}

Matrix synthetic_tokens(const Model& model, std::size_t n, std::uint64_t seed) {
  return tokens_with_offsets(model, n, mix_seed(seed, kPromptStream),
                             std::vector<double>(model.outlier_indices.size(), outlier_offset(model.spec)));
}

Matrix calibration_input(const Model& model, std::uint64_t seed) {
  return tokens_with_offsets(model, 4 * model.spec.head_dim(), mix_seed(seed, kCalibrationStream),
                             std::vector<double>(model.outlier_indices.size(), outlier_offset(model.spec)));
}

ShiftingWorkload shifting_workload(const Model& model, const ShiftingConfig& cfg) {
  if (cfg.prompt_len == 0) throw InvalidArgument("shifting_workload: prompt_len must be positive");
  if (cfg.shift_iteration > cfg.gen_len) {
    throw InvalidArgument("shifting_workload: shift iteration beyond gen_len");
  }
  for (std::size_t p : cfg.planted_tokens) {
    if (p >= cfg.prompt_len) throw InvalidArgument("shifting_workload: planted token outside prompt");
  }
  const std::size_t m = model.outlier_indices.size();
  const double off = outlier_offset(model.spec);
  std::vector<double> before(m, off);
  std::vector<double> after(m, off);
  for (std::size_t i = 0; i < m; ++i) {
    if (i % 2 == 1 || m == 1) after[i] = -off;
  }

  // Orthonormal basis of the pre-shift functionals (modified Gram-Schmidt).
  std::vector<Vec> basis;
  for (Vec g : score_functionals(model, before)) {
    for (const auto& b : basis) {
      const double p = dot(g, b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= p * b[i];
    }
    if (std::sqrt(dot(g, g)) > 1e-9) {
      normalize(g);
      basis.push_back(std::move(g));
    }
  }
  Vec dir(model.spec.model_dim, 0.0);
  for (Vec g : score_functionals(model, after)) {
    normalize(g);
    for (std::size_t i = 0; i < g.size(); ++i) dir[i] += g[i];
  }
  for (const auto& b : basis) {
    const double p = dot(dir, b);
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] -= p * b[i];
  }
  normalize(dir);

  ShiftingWorkload w;
  w.shift_iteration = cfg.shift_iteration;
  w.planted_tokens = cfg.planted_tokens;
  w.prompt = tokens_with_offsets(model, cfg.prompt_len, mix_seed(cfg.seed, kPromptStream), before);
  const double push = cfg.plant_strength * std::sqrt(static_cast<double>(model.spec.model_dim));
  for (std::size_t p : cfg.planted_tokens) {
    for (std::size_t c = 0; c < dir.size(); ++c) w.prompt(p, c) += static_cast<float>(push * dir[c]);
  }
  const Matrix early =
      tokens_with_offsets(model, cfg.shift_iteration, mix_seed(cfg.seed, kPhaseOneStream), before);
  const Matrix late = tokens_with_offsets(model, cfg.gen_len - cfg.shift_iteration,
                                          mix_seed(cfg.seed, kPhaseTwoStream), after);
  w.decode_inputs = Matrix(0, 0);
  for (std::size_t r = 0; r < early.rows(); ++r) w.decode_inputs.append_row(early.row(r));
  for (std::size_t r = 0; r < late.rows(); ++r) w.decode_inputs.append_row(late.row(r));
  if (w.decode_inputs.rows() == 0) w.decode_inputs = Matrix(0, model.spec.model_dim);
  return w;
}

}  // namespace kvspec
