// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvspec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kvspec/error.hpp"

namespace kvspec {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw InvalidArgument("Matrix: data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  Matrix m;
  for (const auto& r : rows) {
    m.append_row(std::span<const float>(r.begin(), r.size()));
  }
  return m;
}

Matrix Matrix::row_vector(std::span<const float> values) {
  return Matrix(1, values.size(), std::vector<float>(values.begin(), values.end()));
}

std::span<float> Matrix::row(std::size_t r) {
  return std::span<float>(data_).subspan(r * cols_, cols_);
}

std::span<const float> Matrix::row(std::size_t r) const {
  return std::span<const float>(data_).subspan(r * cols_, cols_);
}

void Matrix::append_row(std::span<const float> values) {
  if (rows_ == 0 && cols_ == 0) {
    cols_ = values.size();
  } else if (values.size() != cols_) {
    throw InvalidArgument("append_row: row of length " + std::to_string(values.size()) +
                          " into matrix with " + std::to_string(cols_) + " columns");
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

void Matrix::set_row(std::size_t r, std::span<const float> values) {
  if (r >= rows_ || values.size() != cols_) {
    throw InvalidArgument("set_row: index or width out of range for " + shape(*this));
  }
  std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
}

void Matrix::erase_row(std::size_t r) {
  if (r >= rows_) throw InvalidArgument("erase_row: index out of range");
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(r * cols_);
  data_.erase(first, first + static_cast<std::ptrdiff_t>(cols_));
  --rows_;
}

void Matrix::reserve_rows(std::size_t rows) { data_.reserve(rows * cols_); }

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: inner dimensions differ (" + shape(a) + " * " + shape(b) + ")");
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    float* dst = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const float aik = a(i, k);
      if (aik == 0.0f) continue;
      const float* src = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw InvalidArgument("matmul_transposed: widths differ (" + shape(a) + " vs " + shape(b) + ")");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto br = b.row(j);
      float acc = 0.0f;
      for (std::size_t k = 0; k < ar.size(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

std::vector<float> vecmat(std::span<const float> v, const Matrix& m) {
  if (v.size() != m.rows()) {
    throw InvalidArgument("vecmat: vector length " + std::to_string(v.size()) +
                          " vs matrix " + shape(m));
  }
  std::vector<float> out(m.cols(), 0.0f);
  for (std::size_t k = 0; k < v.size(); ++k) {
    const float vk = v[k];
    if (vk == 0.0f) continue;
    const auto src = m.row(k);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += vk * src[j];
  }
  return out;
}

std::vector<float> softmax_row(std::span<const float> v) {
  if (v.empty()) throw InvalidArgument("softmax_row: empty input");
  const float peak = *std::max_element(v.begin(), v.end());
  std::vector<double> e(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    e[i] = std::exp(static_cast<double>(v[i]) - static_cast<double>(peak));
    total += e[i];
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(e[i] / total);
  return out;
}

std::vector<float> layernorm(std::span<const float> x, std::span<const float> gain,
                             std::span<const float> bias, float eps) {
  if (x.size() != gain.size() || x.size() != bias.size()) {
    throw InvalidArgument("layernorm: dimension mismatch");
  }
  if (!(eps > 0.0f)) throw InvalidArgument("layernorm: eps must be positive");
  if (x.empty()) return {};
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>((x[i] - mean) * inv) * gain[i] + bias[i];
  }
  return out;
}

Matrix layernorm_rows(const Matrix& x, std::span<const float> gain,
                      std::span<const float> bias, float eps) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) out.set_row(r, layernorm(x.row(r), gain, bias, eps));
  return out;
}

namespace {

// Column-major double workspace for the Jacobi sweeps.
struct Columns {
  std::size_t n = 0;
  std::vector<std::vector<double>> col;
};

struct DenseSvd {
  Columns u;                  // n x r
  std::vector<double> sigma;  // r
  Columns v;                  // d x r
};

constexpr int kMaxSweeps = 30;
constexpr double kSineTolerance = 1e-10;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Fills columns flagged in `missing` with unit vectors orthogonal to all
// other columns (Gram-Schmidt against the standard basis).
void complete_basis(Columns& c, const std::vector<bool>& missing) {
  const std::size_t n = c.n;
  for (std::size_t j = 0; j < c.col.size(); ++j) {
    if (!missing[j]) continue;
    std::vector<double> best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < n; ++e) {
      std::vector<double> cand(n, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < c.col.size(); ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          const double p = dot(cand, c.col[k]);
          for (std::size_t i = 0; i < n; ++i) cand[i] -= p * c.col[k][i];
        }
      }
      const double nrm = std::sqrt(dot(cand, cand));
      if (nrm > best_norm + 1e-12) {
        best_norm = nrm;
        best = std::move(cand);
      }
    }
    for (auto& x : best) x /= best_norm;
    c.col[j] = std::move(best);
  }
}

// One-sided (Hestenes) Jacobi for rows >= cols.
DenseSvd jacobi_tall(const Matrix& m) {
  const std::size_t n = m.rows();
  const std::size_t d = m.cols();
  Columns w{n, std::vector<std::vector<double>>(d, std::vector<double>(n))};
  Columns v{d, std::vector<std::vector<double>>(d, std::vector<double>(d, 0.0))};
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) w.col[j][i] = m(i, j);
    v.col[j][j] = 1.0;
  }

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double max_sine = 0.0;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        auto& wp = w.col[p];
        auto& wq = w.col[q];
        const double alpha = dot(wp, wp);
        const double beta = dot(wq, wq);
        const double gamma = dot(wp, wq);
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        max_sine = std::max(max_sine, std::abs(s));
        for (std::size_t i = 0; i < n; ++i) {
          const double a = wp[i];
          const double b = wq[i];
          wp[i] = c * a - s * b;
          wq[i] = s * a + c * b;
        }
        auto& vp = v.col[p];
        auto& vq = v.col[q];
        for (std::size_t i = 0; i < d; ++i) {
          const double a = vp[i];
          const double b = vq[i];
          vp[i] = c * a - s * b;
          vq[i] = s * a + c * b;
        }
      }
    }
    if (max_sine < kSineTolerance) break;
  }

  DenseSvd out;
  out.sigma.resize(d);
  for (std::size_t j = 0; j < d; ++j) out.sigma[j] = std::sqrt(dot(w.col[j], w.col[j]));

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.sigma[a] > out.sigma[b]; });

  const double top = d > 0 ? out.sigma[order[0]] : 0.0;
  const double floor = std::max(top * 1e-12, 1e-300);
  out.u = Columns{n, {}};
  out.v = Columns{d, {}};
  std::vector<double> sorted_sigma;
  std::vector<bool> missing;
  for (std::size_t j : order) {
    const double sj = out.sigma[j];
    std::vector<double> uc = w.col[j];
    const bool degenerate = sj <= floor;
    if (!degenerate) {
      for (auto& x : uc) x /= sj;
    }
    out.u.col.push_back(std::move(uc));
    out.v.col.push_back(v.col[j]);
    sorted_sigma.push_back(degenerate ? 0.0 : sj);
    missing.push_back(degenerate);
  }
  out.sigma = std::move(sorted_sigma);
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) {
    complete_basis(out.u, missing);
  }
  return out;
}

Matrix to_matrix(const Columns& c) {
  Matrix m(c.n, c.col.size());
  for (std::size_t j = 0; j < c.col.size(); ++j) {
    for (std::size_t i = 0; i < c.n; ++i) m(i, j) = static_cast<float>(c.col[j][i]);
  }
  return m;
}

}  // namespace

SvdResult svd(const Matrix& m) {
  if (!all_finite(m.data())) throw InvalidArgument("svd: non-finite input");
  if (m.empty()) return {};

  DenseSvd dense;
  if (m.rows() >= m.cols()) {
    dense = jacobi_tall(m);
  } else {
    DenseSvd t = jacobi_tall(m.transpose());
    dense.sigma = std::move(t.sigma);
    dense.u = std::move(t.v);
    dense.v = std::move(t.u);
  }

  for (std::size_t j = 0; j < dense.v.col.size(); ++j) {
    auto& vc = dense.v.col[j];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < vc.size(); ++i) {
      if (std::abs(vc[i]) > std::abs(vc[arg])) arg = i;
    }
    if (vc[arg] < 0.0) {
      for (auto& x : vc) x = -x;
      for (auto& x : dense.u.col[j]) x = -x;
    }
  }

  SvdResult out;
  out.u = to_matrix(dense.u);
  out.v = to_matrix(dense.v);
  out.sigma.reserve(dense.sigma.size());
  for (double s : dense.sigma) out.sigma.push_back(static_cast<float>(s));
  return out;
}

std::vector<std::size_t> topk_indices(std::span<const float> v, std::size_t k) {
  if (k > v.size()) {
    throw InvalidArgument("topk_indices: k=" + std::to_string(k) + " exceeds length " +
                          std::to_string(v.size()));
  }
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    return v[a] > v[b] || (v[a] == v[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

std::vector<float> col_l2_norms(const Matrix& m) {
  std::vector<double> acc(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) acc[c] += static_cast<double>(row[c]) * row[c];
  }
  std::vector<float> out(m.cols());
  for (std::size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<float>(std::sqrt(acc[c]));
  return out;
}

Matrix gather_columns(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= m.cols()) throw InvalidArgument("gather_columns: column out of range");
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = m(r, cols[j]);
  }
  return out;
}

Matrix slice_columns(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.cols()) throw InvalidArgument("slice_columns: range out of bounds");
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw InvalidArgument("gather_rows: row out of range");
    out.set_row(i, m.row(rows[i]));
  }
  return out;
}

float max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("max_abs_diff: shape mismatch (" + shape(a) + " vs " + shape(b) + ")");
  }
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (float x : m.data()) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace kvspec
