// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// A flow model: shape, precision, prior, dequantizer and a stack of layers,
// loaded from and saved to a canonical JSON description.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iflow/dequantizer.hpp"
#include "iflow/layers.hpp"
#include "iflow/prior.hpp"

namespace iflow {

inline constexpr int kModelFormatVersion = 1;

class FlowModel {
 public:
  // Validates and builds all layers. `precision_override` replaces the
  // precision stored in the description (the content hash follows it).
  static FlowModel from_json(const nlohmann::json& j, const Precision* precision_override = nullptr,
                             int K = 32);
  static FlowModel parse(std::string_view text);
  static FlowModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  FlowModel with_precision(const Precision& p) const { return from_json(description_, &p, K_); }

  // Canonical text: sorted keys, doubles as hex-float strings.
  std::string canonical_text() const;
  // SHA-256 of canonical_text(), lower-case hex.
  const std::string& content_hash() const { return hash_; }
  std::array<uint8_t, 32> content_hash_bytes() const;

  const TensorShape& shape() const { return shape_; }
  size_t dims() const { return shape_.size(); }
  const Precision& precision() const { return precision_; }
  int coder_bits() const { return K_; }
  int64_t range_lo() const { return range_lo_; }
  int64_t range_hi() const { return range_hi_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  const Prior& prior() const { return *prior_; }
  const Dequantizer& dequantizer() const { return *dequantizer_; }
  const nlohmann::json& description() const { return description_; }

  // Quantized flow on mantissas. When `layer_bits` is non-null it receives the
  // stream growth (in bits) caused by each layer.
  void forward(std::span<int64_t> x, LayerContext& ctx, std::vector<double>* layer_bits = nullptr) const;
  void inverse(std::span<int64_t> z, LayerContext& ctx) const;

  // Continuous model: log2 p_X(x) = log2 p_Z(f(x)) + sum of log2 |det J|.
  double log2_density(std::span<const double> x) const;
  // -log2 p_X(x) / d.
  double nll_bits_per_dim(std::span<const double> x) const;

 private:
  nlohmann::json description_;
  std::string hash_;
  TensorShape shape_;
  Precision precision_;
  int K_ = 32;
  int64_t range_lo_ = 0, range_hi_ = 256;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::unique_ptr<Prior> prior_;
  std::unique_ptr<Dequantizer> dequantizer_;
};

// SHA-256 helpers (OpenSSL).
std::array<uint8_t, 32> sha256(std::span<const uint8_t> data);
std::string to_hex(std::span<const uint8_t> bytes);

// Random test models. Layers are drawn from all kinds with moderate
// parameters so that data in [range_lo, range_hi) maps near the unit logistic.
struct RandomModelOptions {
  TensorShape shape{3, 4, 4};
  int layers = 4;
  Precision precision{};
  int64_t range_lo = 0;
  int64_t range_hi = 256;
  bool flow_dequantizer = false;
  bool uniform_prior = false;
  bool include_nonlinear = true;
};

nlohmann::json random_model_description(const RandomModelOptions& options, uint64_t seed);

}  // namespace iflow
