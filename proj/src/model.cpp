// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/model.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "iflow/errors.hpp"

namespace iflow {

using json = nlohmann::json;

std::array<uint8_t, 32> sha256(std::span<const uint8_t> data) {
  std::array<uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32) {
    fail(ErrorCode::kIo, "SHA-256 computation failed");
  }
  return out;
}

std::string to_hex(std::span<const uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 15]);
  }
  return s;
}

namespace {

json precision_to_json(const Precision& p) {
  return {{"k", p.k}, {"h", p.h}, {"S", p.S}, {"b", p.b}};
}

Precision precision_from_json(const json& j) {
  Precision p;
  p.k = j.at("k").get<int>();
  p.h = j.at("h").get<int>();
  p.S = j.at("S").get<uint32_t>();
  p.b = j.at("b").get<int>();
  return p;
}

}  // namespace

FlowModel FlowModel::from_json(const json& j, const Precision* precision_override, int K) {
  FlowModel m;
  m.K_ = K;
  try {
    if (!j.is_object()) fail(ErrorCode::kModel, "model description must be a JSON object");
    if (j.value("format", std::string()) != "iflow-model") {
      fail(ErrorCode::kModel, "not an iflow model description (format field)");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      fail(ErrorCode::kVersion, "unsupported model format version " + std::to_string(version));
    }
    const auto shape = j.at("shape").get<std::vector<int>>();
    if (shape.size() != 3 || shape[0] < 1 || shape[1] < 1 || shape[2] < 1) {
      fail(ErrorCode::kModel, "shape must be [channels, height, width] with positive entries");
    }
    m.shape_ = TensorShape{shape[0], shape[1], shape[2]};
    const auto range = j.at("data_range").get<std::vector<int64_t>>();
    if (range.size() != 2 || range[1] <= range[0] || range[0] < INT32_MIN || range[1] > int64_t{INT32_MAX} + 1) {
      fail(ErrorCode::kModel, "data_range must be [lo, hi) with lo < hi inside 32-bit integers");
    }
    m.range_lo_ = range[0];
    m.range_hi_ = range[1];
    m.precision_ = precision_override ? *precision_override : precision_from_json(j.at("precision"));
    m.precision_.validate(K);
    // Mantissas of the data must fit comfortably in 63 bits.
    const double span = std::ldexp(std::fmax(std::fabs(static_cast<double>(m.range_lo_)),
                                             std::fabs(static_cast<double>(m.range_hi_))),
                                   m.precision_.k);
    if (!(span < 0x1p56)) fail(ErrorCode::kModel, "data range too wide for precision k");

    m.prior_ = std::make_unique<Prior>(PriorSpec::from_json(j.at("prior")), m.precision_, K);
    m.dequantizer_ = dequantizer_from_json(j.at("dequantizer"), m.range_lo_, m.range_hi_, m.precision_, K);
    const json& layers = j.at("layers");
    if (!layers.is_array()) fail(ErrorCode::kModel, "layers must be an array");
    for (const auto& lj : layers) m.layers_.push_back(layer_from_json(lj, m.shape_, m.precision_, K));
  } catch (const json::exception& e) {
    fail(ErrorCode::kModel, std::string("model description: ") + e.what());
  }

  json layers = json::array();
  for (const auto& l : m.layers_) layers.push_back(l->to_json());
  m.description_ = json{{"format", "iflow-model"},
                        {"version", kModelFormatVersion},
                        {"shape", {m.shape_.channels, m.shape_.height, m.shape_.width}},
                        {"data_range", {m.range_lo_, m.range_hi_}},
                        {"precision", precision_to_json(m.precision_)},
                        {"prior", m.prior_->spec().to_json()},
                        {"dequantizer", m.dequantizer_->to_json()},
                        {"layers", layers}};
  const std::string text = m.canonical_text();
  m.hash_ = to_hex(sha256({reinterpret_cast<const uint8_t*>(text.data()), text.size()}));
  return m;
}

FlowModel FlowModel::parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kModel, std::string("model file is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

FlowModel FlowModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void FlowModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write model file " + path.string());
  out << canonical_text();
  if (!out) fail(ErrorCode::kIo, "failed writing model file " + path.string());
}

std::string FlowModel::canonical_text() const { return description_.dump(1) + "\n"; }

std::array<uint8_t, 32> FlowModel::content_hash_bytes() const {
  const std::string text = canonical_text();
  return sha256({reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

void FlowModel::forward(std::span<int64_t> x, LayerContext& ctx, std::vector<double>* layer_bits) const {
  if (x.size() != dims()) fail(ErrorCode::kParameter, "input size does not match the model shape");
  if (layer_bits) layer_bits->assign(layers_.size(), 0.0);
  for (size_t i = 0; i < layers_.size(); ++i) {
    const double before = layer_bits ? ctx.aux->information_bits() : 0.0;
    layers_[i]->forward(x, ctx);
    if (layer_bits) (*layer_bits)[i] = ctx.aux->information_bits() - before;
  }
}

void FlowModel::inverse(std::span<int64_t> z, LayerContext& ctx) const {
  if (z.size() != dims()) fail(ErrorCode::kParameter, "latent size does not match the model shape");
  for (size_t i = layers_.size(); i-- > 0;) layers_[i]->inverse(z, ctx);
}

double FlowModel::log2_density(std::span<const double> x) const {
  if (x.size() != dims()) fail(ErrorCode::kParameter, "input size does not match the model shape");
  std::vector<double> v(x.begin(), x.end());
  double logdet = 0;
  for (const auto& l : layers_) logdet += l->forward_continuous(v);
  double lp = 0;
  for (double z : v) lp += prior_->log2_density(z);
  return lp + logdet;
}

double FlowModel::nll_bits_per_dim(std::span<const double> x) const {
  return -log2_density(x) / static_cast<double>(dims());
}

// ---------------------------------------------------------------------------

namespace {

struct Rng {
  explicit Rng(uint64_t seed) : gen(seed) {}
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(gen); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
  std::mt19937_64 gen;
};

json hex(double v) { return encode_double(v); }

json hex_vector(Rng& rng, size_t n, double sd) {
  json a = json::array();
  for (size_t i = 0; i < n; ++i) a.push_back(hex(rng.normal(sd)));
  return a;
}

json hex_matrix(Rng& rng, size_t rows, size_t cols, double sd) {
  json a = json::array();
  for (size_t r = 0; r < rows; ++r) a.push_back(hex_vector(rng, cols, sd));
  return a;
}

json conditioner(Rng& rng, size_t outputs, size_t inputs) {
  const double sd = inputs > 0 ? 0.6 / std::sqrt(static_cast<double>(inputs)) : 0.0;
  json c = {{"scale_bias", hex_vector(rng, outputs, 0.3)}, {"shift_bias", hex_vector(rng, outputs, 0.2)}};
  c["scale_weight"] = inputs > 0 ? hex_matrix(rng, outputs, inputs, sd) : json::array();
  c["shift_weight"] = inputs > 0 ? hex_matrix(rng, outputs, inputs, sd) : json::array();
  return c;
}

// Random near-orthogonal matrix with mildly perturbed singular values.
json conv_weight(Rng& rng, int C) {
  const size_t n = static_cast<size_t>(C);
  std::vector<double> q(n * n);
  for (auto& v : q) v = rng.normal();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < i; ++j) {
      double dot = 0;
      for (size_t t = 0; t < n; ++t) dot += q[i * n + t] * q[j * n + t];
      for (size_t t = 0; t < n; ++t) q[i * n + t] -= dot * q[j * n + t];
    }
    double norm = 0;
    for (size_t t = 0; t < n; ++t) norm += q[i * n + t] * q[i * n + t];
    norm = std::sqrt(norm);
    const double gain = std::exp(rng.normal(0.15));
    for (size_t t = 0; t < n; ++t) q[i * n + t] /= norm;
    for (size_t t = 0; t < n; ++t) q[i * n + t] *= gain;
  }
  json a = json::array();
  for (size_t r = 0; r < n; ++r) {
    json row = json::array();
    for (size_t c = 0; c < n; ++c) row.push_back(hex(q[r * n + c]));
    a.push_back(row);
  }
  return a;
}

}  // namespace

json random_model_description(const RandomModelOptions& o, uint64_t seed) {
  Rng rng(seed);
  const size_t C = static_cast<size_t>(o.shape.channels);
  const size_t d = o.shape.size();
  json layers = json::array();

  // Map the data range to about [-2, 2).
  const double width = static_cast<double>(o.range_hi - o.range_lo);
  json scale = json::array(), shift = json::array();
  for (size_t c = 0; c < C; ++c) {
    const double a = 4.0 / width * std::exp(rng.normal(0.05));
    scale.push_back(hex(a));
    shift.push_back(hex(-2.0 - a * static_cast<double>(o.range_lo) + rng.normal(0.05)));
  }
  layers.push_back({{"kind", "channel_scale"}, {"scale", scale}, {"shift", shift}});

  const char* kinds_all[] = {"coupling", "conv1x1", "elementwise", "autoregressive", "channel_scale"};
  const char* kinds_linear[] = {"coupling", "conv1x1", "autoregressive", "channel_scale"};
  for (int i = 1; i < o.layers; ++i) {
    std::string kind = o.include_nonlinear ? kinds_all[(i - 1 + seed) % 5] : kinds_linear[(i - 1 + seed) % 4];
    if (d < 2 && (kind == "coupling" || kind == "autoregressive")) kind = "channel_scale";
    const bool soft = o.include_nonlinear && rng.integer(0, 1) == 1;
    json element = soft ? json{{"type", "softstep"},
                               {"alpha", hex(rng.uniform(-0.4, 0.8))},
                               {"width", hex(rng.uniform(0.5, 2.0))},
                               {"domain", json::array({hex(-4096.0), hex(4096.0)})}}
                        : json{{"type", "affine"}};
    if (kind == "coupling") {
      const size_t n1 = d / 2, n2 = d - n1;
      layers.push_back({{"kind", "coupling"},
                        {"split", {n1, n2}},
                        {"element", element},
                        {"scale_bound", hex(0.5)},
                        {"conditioners", json::array({conditioner(rng, n2, n1)})}});
    } else if (kind == "autoregressive") {
      const size_t parts = d >= 3 ? 3 : d;
      std::vector<size_t> split;
      size_t used = 0;
      for (size_t p = 0; p < parts; ++p) {
        const size_t n = p + 1 == parts ? d - used : d / parts;
        split.push_back(n);
        used += n;
      }
      json conds = json::array();
      size_t offset = 0;
      for (size_t n : split) {
        conds.push_back(conditioner(rng, n, offset));
        offset += n;
      }
      layers.push_back({{"kind", "autoregressive"},
                        {"split", split},
                        {"element", element},
                        {"scale_bound", hex(0.4)},
                        {"conditioners", conds}});
    } else if (kind == "conv1x1") {
      layers.push_back({{"kind", "conv1x1"}, {"weight", conv_weight(rng, o.shape.channels)}});
    } else if (kind == "elementwise") {
      const char* strategies[] = {"uniform_x", "binary_search", "uniform_z"};
      layers.push_back({{"kind", "elementwise"},
                        {"fn",
                         {{"type", "softstep"},
                          {"alpha", hex(rng.uniform(-0.4, 0.8))},
                          {"width", hex(rng.uniform(0.5, 2.0))},
                          {"center", hex(rng.normal(0.5))},
                          {"log_scale", hex(rng.normal(0.1))},
                          {"shift", hex(rng.normal(0.1))}}},
                        {"strategy", strategies[rng.integer(0, 2)]},
                        {"domain", json::array({hex(-4096.0), hex(4096.0)})}});
    } else {
      json s = json::array(), t = json::array();
      for (size_t c = 0; c < C; ++c) {
        s.push_back(hex(std::exp(rng.normal(0.2))));
        t.push_back(hex(rng.normal(0.1)));
      }
      layers.push_back({{"kind", "channel_scale"}, {"scale", s}, {"shift", t}});
    }
  }

  json prior = o.uniform_prior ? json{{"kind", "uniform"}, {"low", -64}, {"high", 64}}
                               : json{{"kind", "logistic"}, {"loc", hex(0.0)}, {"scale", hex(1.0)}, {"clamp", hex(30.0)}};
  json deq = json{{"kind", "uniform"}};
  if (o.flow_dequantizer) {
    deq = {{"kind", "flow"},
           {"scale_weight", hex(rng.normal(0.5))},
           {"scale_bias", hex(rng.normal(0.2))},
           {"scale_bound", hex(0.3)},
           {"shift_weight", hex(rng.normal(0.5))},
           {"shift_bias", hex(rng.normal(0.3))},
           {"y_limit", hex(64.0)}};
  }
  return {{"format", "iflow-model"},
          {"version", kModelFormatVersion},
          {"shape", {o.shape.channels, o.shape.height, o.shape.width}},
          {"data_range", {o.range_lo, o.range_hi}},
          {"precision", precision_to_json(o.precision)},
          {"prior", prior},
          {"dequantizer", deq},
          {"layers", layers}};
}

}  // namespace iflow
