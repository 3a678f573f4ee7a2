// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Dequantizers q(u | x°) with u in [0, 1)^d, coded at k-precision. On the
// encoder side the noise is *decoded* from the auxiliary stream (bits-back);
// the decoder re-encodes it.

#pragma once

#include <memory>
#include <span>
#include <string_view>

#include <json.hpp>

#include "iflow/layers.hpp"
#include "iflow/prior.hpp"

namespace iflow {

class Dequantizer {
 public:
  virtual ~Dequantizer() = default;
  virtual std::string_view kind() const = 0;
  // x_hat[i] = x°[i] * 2^k + u[i] with u decoded from ctx.aux.
  virtual void decode_noise(std::span<const int32_t> xo, std::span<int64_t> x_hat, LayerContext& ctx) const = 0;
  // Splits x_hat into x° and u and encodes u back onto ctx.aux.
  virtual void encode_noise(std::span<const int64_t> x_hat, std::span<int32_t> xo, LayerContext& ctx) const = 0;
  // Sum over dimensions of log2 q(u | x°).
  virtual double log2_q(std::span<const int32_t> xo, std::span<const double> u) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

// q = U(0, 1): every noise value costs exactly k bits.
class UniformDequantizer final : public Dequantizer {
 public:
  explicit UniformDequantizer(const Precision& precision);
  std::string_view kind() const override { return "uniform"; }
  void decode_noise(std::span<const int32_t> xo, std::span<int64_t> x_hat, LayerContext& ctx) const override;
  void encode_noise(std::span<const int64_t> x_hat, std::span<int32_t> xo, LayerContext& ctx) const override;
  double log2_q(std::span<const int32_t>, std::span<const double> u) const override;
  nlohmann::json to_json() const override { return {{"kind", "uniform"}}; }

 private:
  Precision precision_;
};

// u = sigmoid(a(x°) * eps + t(x°)) with eps ~ logistic(0, 1) truncated to
// a symmetric interval (|eps| < 9.7 at S = 2^16). The per-value
// log-scale and shift are fixed functions of the normalized x°:
//   n = (x° - range_lo) / (range_hi - range_lo) - 1/2
//   log a = scale_bound * tanh(scale_weight * n + scale_bias)
//   t = shift_weight * n + shift_bias
class FlowDequantizer final : public Dequantizer {
 public:
  struct Params {
    double scale_weight = 0.5;
    double scale_bias = 0.0;
    double scale_bound = 0.25;
    double shift_weight = 1.0;
    double shift_bias = 0.0;
    double y_limit = 64.0;
  };

  FlowDequantizer(const Params& params, int64_t range_lo, int64_t range_hi, const Precision& precision,
                  int K = 32);
  std::string_view kind() const override { return "flow"; }
  void decode_noise(std::span<const int32_t> xo, std::span<int64_t> x_hat, LayerContext& ctx) const override;
  void encode_noise(std::span<const int64_t> x_hat, std::span<int32_t> xo, LayerContext& ctx) const override;
  double log2_q(std::span<const int32_t> xo, std::span<const double> u) const override;
  nlohmann::json to_json() const override;

  static Params params_from_json(const nlohmann::json& j);

 private:
  void affine(int32_t xo, double& log_scale, double& shift) const;
  void plans(std::span<const int32_t> xo, std::vector<ElementPlan>& out) const;

  Params params_;
  int64_t range_lo_, range_hi_;
  Precision precision_;
  int K_;
  // eps = logit(u) with u uniform on a grid uniform in u; sampling runs the
  // grid forward so that any decoded u re-encodes exactly.
  std::unique_ptr<ElementwiseLayer> noise_;
  int64_t noise_begin_ = 0;
  uint64_t noise_width_ = 0;
  std::unique_ptr<ElementwiseLayer> squash_;
};

std::unique_ptr<Dequantizer> dequantizer_from_json(const nlohmann::json& j, int64_t range_lo, int64_t range_hi,
                                                   const Precision& precision, int K = 32);

}  // namespace iflow
