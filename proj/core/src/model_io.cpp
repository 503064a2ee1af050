// Copyright 2026 The kvspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "kvspec/error.hpp"
#include "kvspec/model.hpp"

namespace kvspec {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "kvspec-model";
constexpr int kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "model payloads are little-endian f32; big-endian hosts need byte swapping");

std::filesystem::path payload_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".bin";
  return p;
}

struct TensorRef {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  const float* data;
};

std::vector<TensorRef> tensor_table(const Model& model) {
  std::vector<TensorRef> refs;
  auto add = [&](const std::string& name, const Matrix& m) {
    refs.push_back({name, m.rows(), m.cols(), m.data().data()});
  };
  auto add_vec = [&](const std::string& name, const std::vector<float>& v) {
    refs.push_back({name, 1, v.size(), v.data()});
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& w = model.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "w_q", w.w_q);
    add(p + "w_k", w.w_k);
    add(p + "w_v", w.w_v);
    add(p + "w_o", w.w_o);
    add(p + "ffn_in", w.ffn_in);
    add(p + "ffn_out", w.ffn_out);
    add_vec(p + "ln1_gain", w.ln1_gain);
    add_vec(p + "ln1_bias", w.ln1_bias);
    add_vec(p + "ln2_gain", w.ln2_gain);
    add_vec(p + "ln2_bias", w.ln2_bias);
    if (model.skewed) {
      for (std::size_t h = 0; h < model.skew[l].size(); ++h) {
        add(p + "skew." + std::to_string(h), model.skew[l][h]);
      }
    }
  }
  return refs;
}

json spec_to_json(const ModelSpec& s) {
  return json{{"layers", s.layers},
              {"model_dim", s.model_dim},
              {"heads", s.heads},
              {"head_dim", s.head_dim()},
              {"ffn_dim", s.ffn_dim},
              {"ln_eps", s.ln_eps},
              {"outlier_channels", s.outlier_channels},
              {"outlier_scale", s.outlier_scale},
              {"seed", s.seed}};
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ManifestError(std::string("manifest missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest field '") + key + "': " + e.what());
  }
}

ModelSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ManifestError("manifest 'spec' is not an object");
  ModelSpec s;
  s.layers = field<std::size_t>(j, "layers");
  s.model_dim = field<std::size_t>(j, "model_dim");
  s.heads = field<std::size_t>(j, "heads");
  s.ffn_dim = field<std::size_t>(j, "ffn_dim");
  s.ln_eps = field<float>(j, "ln_eps");
  s.outlier_channels = field<std::size_t>(j, "outlier_channels");
  s.outlier_scale = field<float>(j, "outlier_scale");
  s.seed = field<std::uint64_t>(j, "seed");
  if (j.contains("head_dim")) {
    const auto d = field<std::size_t>(j, "head_dim");
    if (s.heads * d != s.model_dim) {
      throw ValidationError("model_dim " + std::to_string(s.model_dim) + " != heads " +
                            std::to_string(s.heads) + " x head_dim " + std::to_string(d));
    }
  }
  s.validate();
  return s;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& manifest_path) {
  model.validate();
  const auto refs = tensor_table(model);
  const auto bin = payload_path(manifest_path);

  json tensors = json::array();
  std::size_t offset = 0;
  std::ofstream payload(bin, std::ios::binary | std::ios::trunc);
  if (!payload) throw IoError("cannot open " + bin.string() + " for writing");
  for (const auto& r : refs) {
    const std::size_t length = r.rows * r.cols * sizeof(float);
    payload.write(reinterpret_cast<const char*>(r.data), static_cast<std::streamsize>(length));
    tensors.push_back({{"name", r.name},
                       {"shape", {r.rows, r.cols}},
                       {"offset", offset},
                       {"length", length}});
    offset += length;
  }
  payload.close();
  if (!payload) throw IoError("failed writing " + bin.string());

  json manifest{{"format", kFormat},
                {"version", kVersion},
                {"spec", spec_to_json(model.spec)},
                {"skewed", model.skewed},
                {"outlier_indices", model.outlier_indices},
                {"dtype", "f32le"},
                {"payload", bin.filename().string()},
                {"payload_bytes", offset},
                {"tensors", std::move(tensors)}};
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + manifest_path.string() + " for writing");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + manifest_path.string());
}

Model load_model(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ManifestError("cannot parse " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || manifest.value("format", "") != kFormat) {
    throw ManifestError(manifest_path.string() + " is not a kvspec model manifest");
  }
  if (field<int>(manifest, "version") != kVersion) {
    throw ManifestError("unsupported model manifest version");
  }
  if (!manifest.contains("spec")) throw ManifestError("manifest missing field 'spec'");

  Model model;
  model.spec = spec_from_json(manifest.at("spec"));
  model.skewed = field<bool>(manifest, "skewed");
  model.outlier_indices = field<std::vector<std::size_t>>(manifest, "outlier_indices");

  const auto bin = manifest_path.parent_path() / field<std::string>(manifest, "payload");
  std::ifstream payload(bin, std::ios::binary | std::ios::ate);
  if (!payload) throw IoError("cannot open payload " + bin.string());
  const auto actual = static_cast<std::size_t>(payload.tellg());
  const auto declared = field<std::size_t>(manifest, "payload_bytes");
  if (actual != declared) {
    throw SizeMismatchError("payload " + bin.string() + " has " + std::to_string(actual) +
                            " bytes, manifest declares " + std::to_string(declared));
  }
  std::vector<char> bytes(actual);
  payload.seekg(0);
  payload.read(bytes.data(), static_cast<std::streamsize>(actual));
  if (!payload) throw IoError("failed reading " + bin.string());

  if (!manifest.contains("tensors")) throw ManifestError("manifest missing field 'tensors'");
  const auto& table = manifest.at("tensors");
  if (!table.is_array()) throw ManifestError("manifest 'tensors' is not an array");
  auto read_tensor = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    for (const auto& t : table) {
      if (field<std::string>(t, "name") != name) continue;
      const auto shape = field<std::vector<std::size_t>>(t, "shape");
      if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
        throw ValidationError("tensor " + name + " has unexpected shape");
      }
      const auto offset = field<std::size_t>(t, "offset");
      const auto length = field<std::size_t>(t, "length");
      if (length != rows * cols * sizeof(float) || offset > actual || length > actual - offset) {
        throw SizeMismatchError("tensor " + name + " byte range disagrees with shape or payload");
      }
      std::vector<float> data(rows * cols);
      std::memcpy(data.data(), bytes.data() + offset, length);
      return Matrix(rows, cols, std::move(data));
    }
    throw ManifestError("manifest has no tensor '" + name + "'");
  };
  auto read_vec = [&](const std::string& name, std::size_t n) {
    Matrix m = read_tensor(name, 1, n);
    return std::vector<float>(m.data().begin(), m.data().end());
  };

  const auto& s = model.spec;
  for (std::size_t l = 0; l < s.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerWeights w;
    w.w_q = read_tensor(p + "w_q", s.model_dim, s.model_dim);
    w.w_k = read_tensor(p + "w_k", s.model_dim, s.model_dim);
    w.w_v = read_tensor(p + "w_v", s.model_dim, s.model_dim);
    w.w_o = read_tensor(p + "w_o", s.model_dim, s.model_dim);
    w.ffn_in = read_tensor(p + "ffn_in", s.model_dim, s.ffn_dim);
    w.ffn_out = read_tensor(p + "ffn_out", s.ffn_dim, s.model_dim);
    w.ln1_gain = read_vec(p + "ln1_gain", s.model_dim);
    w.ln1_bias = read_vec(p + "ln1_bias", s.model_dim);
    w.ln2_gain = read_vec(p + "ln2_gain", s.model_dim);
    w.ln2_bias = read_vec(p + "ln2_bias", s.model_dim);
    model.layers.push_back(std::move(w));
    if (model.skewed) {
      std::vector<Matrix> blocks;
      for (std::size_t h = 0; h < s.heads; ++h) {
        blocks.push_back(read_tensor(p + "skew." + std::to_string(h), s.head_dim(), s.head_dim()));
      }
      model.skew.push_back(std::move(blocks));
    }
  }
  model.validate();
  return model;
}

}  // namespace kvspec
