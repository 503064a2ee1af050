// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/skewing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kvspec/error.hpp"

namespace kvspec {

namespace {

// Top-column share used by the report; matches the default partial ratio.
constexpr double kReportRatio = 0.3;

void check_skew_shapes(const Model& model, const SkewSet& skews) {
  const std::size_t d = model.spec.head_dim();
  if (skews.a.size() != model.spec.layers) throw InvalidArgument("skew set layer count mismatch");
  for (const auto& per_layer : skews.a) {
    if (per_layer.size() != model.spec.heads) throw InvalidArgument("skew set head count mismatch");
    for (const auto& a : per_layer) {
      if (a.rows() != d || a.cols() != d) throw InvalidArgument("skew block is not d x d");
    }
  }
}

// W[:, begin:begin+d] * A with double accumulation, so every skewed weight
// is rounded to float once.
Matrix skew_block(const Matrix& w, std::size_t begin, const Matrix& a) {
  const std::size_t d = a.rows();
  Matrix out(w.rows(), d);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(w(r, begin + j)) * a(j, c);
      out(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

// Largest |(x Wq)(x Wk)^T| deviation between two weight sets, in double so
// that float dot-product rounding does not mask the skew error itself.
double score_deviation(const Matrix& xa, const LayerWeights& a, const LayerWeights& b,
                       std::size_t begin, std::size_t d) {
  auto project = [&](const Matrix& w) {
    std::vector<double> out(xa.rows() * d, 0.0);
    for (std::size_t r = 0; r < xa.rows(); ++r) {
      for (std::size_t i = 0; i < xa.cols(); ++i) {
        const double x = xa(r, i);
        for (std::size_t c = 0; c < d; ++c) out[r * d + c] += x * w(i, begin + c);
      }
    }
    return out;
  };
  const auto qa = project(a.w_q);
  const auto ka = project(a.w_k);
  const auto qb = project(b.w_q);
  const auto kb = project(b.w_k);
  double worst = 0.0;
  for (std::size_t r = 0; r < xa.rows(); ++r) {
    for (std::size_t t = 0; t < xa.rows(); ++t) {
      double sa = 0.0;
      double sb = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        sa += qa[r * d + c] * ka[t * d + c];
        sb += qb[r * d + c] * kb[t * d + c];
      }
      worst = std::max(worst, std::abs(sa - sb));
    }
  }
  return worst;
}

float orthogonality_error(const Matrix& a) {
  return max_abs_diff(matmul(a.transpose(), a), Matrix::identity(a.cols()));
}

}  // namespace

SkewSet calibrate_skew(const Model& model, const Matrix& sample) {
  model.validate();
  if (model.skewed) throw InvalidArgument("calibrate_skew: model is already skewed");
  if (sample.rows() < 2) throw InvalidArgument("calibrate_skew: need at least 2 calibration tokens");
  if (sample.cols() != model.spec.model_dim) {
    throw InvalidArgument("calibrate_skew: sample width != model_dim");
  }

  const std::size_t d = model.spec.head_dim();
  auto caches = make_caches(model.spec);
  std::vector<Matrix> inputs;
  forward_stack(model, sample, caches, &inputs);

  SkewSet out;
  for (std::size_t l = 0; l < model.spec.layers; ++l) {
    const auto& layer = model.layers[l];
    const Matrix xa = attention_input(inputs[l], layer, model.spec.ln_eps);
    std::vector<Matrix> blocks;
    std::vector<std::vector<float>> sigmas;
    for (std::size_t h = 0; h < model.spec.heads; ++h) {
      Matrix q = matmul(xa, slice_columns(layer.w_q, h * d, d));
      while (q.rows() < d) q.append_row(std::vector<float>(d, 0.0f));
      SvdResult f = svd(q);
      blocks.push_back(std::move(f.v));
      sigmas.push_back(std::move(f.sigma));
    }
    out.a.push_back(std::move(blocks));
    out.sigma.push_back(std::move(sigmas));
  }
  return out;
}

Model apply_skew(const Model& model, const SkewSet& skews) {
  model.validate();
  if (model.skewed) throw InvalidArgument("apply_skew: model is already skewed");
  check_skew_shapes(model, skews);

  const std::size_t D = model.spec.model_dim;
  const std::size_t d = model.spec.head_dim();
  Model out = model;
  for (std::size_t l = 0; l < model.spec.layers; ++l) {
    auto& w = out.layers[l];
    for (std::size_t h = 0; h < model.spec.heads; ++h) {
      const Matrix& a = skews.a[l][h];
      const Matrix q = skew_block(w.w_q, h * d, a);
      const Matrix k = skew_block(w.w_k, h * d, a);
      for (std::size_t r = 0; r < D; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          w.w_q(r, h * d + c) = q(r, c);
          w.w_k(r, h * d + c) = k(r, c);
        }
      }
    }
  }
  out.skewed = true;
  out.skew = skews.a;
  return out;
}

SkewReport verify_skew(const Model& original, const Model& skewed, const SkewSet& skews,
                       const Matrix& probe) {
  if (original.skewed || !skewed.skewed) {
    throw InvalidArgument("verify_skew: expects an unskewed and a skewed model");
  }
  if (original.spec != skewed.spec) throw InvalidArgument("verify_skew: model specs differ");
  check_skew_shapes(original, skews);

  const std::size_t d = original.spec.head_dim();
  SkewReport report;
  report.skews = skews;

  auto ca = make_caches(original.spec);
  auto cb = make_caches(skewed.spec);
  std::vector<Matrix> ia;
  std::vector<Matrix> ib;
  forward_stack(original, probe, ca, &ia);
  forward_stack(skewed, probe, cb, &ib);
  for (std::size_t l = 1; l < ia.size(); ++l) {
    report.max_abs_forward_diff = std::max(report.max_abs_forward_diff, max_abs_diff(ia[l], ib[l]));
  }

  const auto top = static_cast<std::size_t>(std::ceil(kReportRatio * static_cast<double>(d) - 1e-9));
  for (std::size_t l = 0; l < original.spec.layers; ++l) {
    const Matrix xa = attention_input(ia[l], original.layers[l], original.spec.ln_eps);
    double energy = 0.0;
    for (std::size_t h = 0; h < original.spec.heads; ++h) {
      report.max_abs_score_diff = std::max(
          report.max_abs_score_diff,
          static_cast<float>(score_deviation(xa, original.layers[l], skewed.layers[l], h * d, d)));
      report.max_orthogonality_error =
          std::max(report.max_orthogonality_error, orthogonality_error(skews.a[l][h]));
      double total = 0.0;
      double head = 0.0;
      for (std::size_t j = 0; j < skews.sigma[l][h].size(); ++j) {
        const double e = static_cast<double>(skews.sigma[l][h][j]) * skews.sigma[l][h][j];
        total += e;
        if (j < top) head += e;
      }
      energy += total > 0.0 ? head / total : 1.0;
    }
    report.top_column_energy.push_back(energy / static_cast<double>(original.spec.heads));
  }
  return report;
}

}  // namespace kvspec
