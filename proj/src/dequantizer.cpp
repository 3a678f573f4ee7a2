// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/dequantizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "iflow/errors.hpp"

namespace iflow {

using json = nlohmann::json;

namespace {

void check_sizes(size_t a, size_t b) {
  if (a != b) fail(ErrorCode::kParameter, "dequantizer input and output sizes differ");
}

// Truncation of the sampling interval for u: logit' = 1/(u(1-u)) must keep
// slope numerators S / u below 2^K, and the outermost cell should be a grid
// cell. At S = 2^16, K = 32 this keeps |eps| < 9.7, dropping 1.2e-4 of the mass.
double noise_margin(const Precision& precision, int K) {
  return std::max(std::ldexp(1.0, -squash_grid_precision(precision).h),
                  std::ldexp(4.0 * static_cast<double>(precision.S), -K));
}

}  // namespace

UniformDequantizer::UniformDequantizer(const Precision& precision) : precision_(precision) {}

void UniformDequantizer::decode_noise(std::span<const int32_t> xo, std::span<int64_t> x_hat,
                                      LayerContext& ctx) const {
  check_sizes(xo.size(), x_hat.size());
  const int k = precision_.k;
  const auto t0 = std::chrono::steady_clock::now();
  for (size_t i = 0; i < xo.size(); ++i) {
    x_hat[i] = (static_cast<int64_t>(xo[i]) << k) + static_cast<int64_t>(ctx.aux->decode_bits(k));
  }
  if (ctx.coding_seconds) {
    *ctx.coding_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
}

void UniformDequantizer::encode_noise(std::span<const int64_t> x_hat, std::span<int32_t> xo,
                                      LayerContext& ctx) const {
  check_sizes(xo.size(), x_hat.size());
  const int k = precision_.k;
  const auto t0 = std::chrono::steady_clock::now();
  for (size_t i = x_hat.size(); i-- > 0;) {
    const int64_t base = x_hat[i] >> k;  // arithmetic shift is a floor
    xo[i] = static_cast<int32_t>(base);
    ctx.aux->encode_bits(static_cast<uint64_t>(x_hat[i] - (base << k)), k);
  }
  if (ctx.coding_seconds) {
    *ctx.coding_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
}

double UniformDequantizer::log2_q(std::span<const int32_t>, std::span<const double>) const { return 0.0; }

// ---------------------------------------------------------------------------

FlowDequantizer::FlowDequantizer(const Params& params, int64_t range_lo, int64_t range_hi,
                                 const Precision& precision, int K)
    : params_(params), range_lo_(range_lo), range_hi_(range_hi), precision_(precision), K_(K),
      noise_(std::make_unique<ElementwiseLayer>(std::make_unique<LogitFn>(), IntervalStrategy::kUniformX,
                                                noise_margin(precision, K), 1.0 - noise_margin(precision, K),
                                                squash_grid_precision(precision), K)) {
  if (range_hi <= range_lo) fail(ErrorCode::kModel, "flow dequantizer needs a non-empty data range");
  if (!(params.scale_bound > 0) || !(params.y_limit > 0)) {
    fail(ErrorCode::kModel, "flow dequantizer needs positive scale_bound and y_limit");
  }
  const double reach = std::exp(params.scale_bound) * PriorSpec{}.clamp + 0.5 * std::fabs(params.shift_weight) +
                       std::fabs(params.shift_bias);
  if (!(reach < params.y_limit)) {
    fail(ErrorCode::kModel, "flow dequantizer pre-activation range exceeds y_limit");
  }
  noise_begin_ = noise_->transform().grid().x_begin();
  noise_width_ = static_cast<uint64_t>(noise_->transform().grid().x_end() - noise_begin_);
  squash_ = std::make_unique<ElementwiseLayer>(std::make_unique<SigmoidFn>(), IntervalStrategy::kUniformZ,
                                               -params.y_limit, params.y_limit, squash_grid_precision(precision), K, true);
}

void FlowDequantizer::affine(int32_t xo, double& log_scale, double& shift) const {
  const double n = static_cast<double>(xo - range_lo_) / static_cast<double>(range_hi_ - range_lo_) - 0.5;
  log_scale = params_.scale_bound * std::tanh(params_.scale_weight * n + params_.scale_bias);
  shift = params_.shift_weight * n + params_.shift_bias;
}

void FlowDequantizer::plans(std::span<const int32_t> xo, std::vector<ElementPlan>& out) const {
  out.resize(xo.size());
  for (size_t i = 0; i < xo.size(); ++i) {
    double s, t;
    affine(xo[i], s, t);
    ElementPlan p;
    p.scale = approximate_scale(std::exp(s), precision_.S, K_);
    p.out_offset = quantize_mantissa(t, precision_.k);
    out[i] = p;
  }
}

void FlowDequantizer::decode_noise(std::span<const int32_t> xo, std::span<int64_t> x_hat,
                                   LayerContext& ctx) const {
  check_sizes(xo.size(), x_hat.size());
  const int k = precision_.k;
  {
    const auto t0 = std::chrono::steady_clock::now();
    for (size_t i = x_hat.size(); i-- > 0;) {
      x_hat[i] = noise_begin_ + static_cast<int64_t>(ctx.aux->decode_wide(noise_width_));
    }
    if (ctx.coding_seconds) {
      *ctx.coding_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }
  noise_->forward(x_hat, ctx);
  thread_local std::vector<ElementPlan> p;
  plans(xo, p);
  run_forward_batch(x_hat, p, ctx);
  squash_->forward(x_hat, ctx);
  for (size_t i = 0; i < xo.size(); ++i) x_hat[i] += static_cast<int64_t>(xo[i]) << k;
}

void FlowDequantizer::encode_noise(std::span<const int64_t> x_hat, std::span<int32_t> xo,
                                   LayerContext& ctx) const {
  check_sizes(xo.size(), x_hat.size());
  const int k = precision_.k;
  thread_local std::vector<int64_t> u;
  u.resize(x_hat.size());
  for (size_t i = 0; i < x_hat.size(); ++i) {
    const int64_t base = x_hat[i] >> k;
    xo[i] = static_cast<int32_t>(base);
    u[i] = x_hat[i] - (base << k);
  }
  squash_->inverse(u, ctx);
  thread_local std::vector<ElementPlan> p;
  plans(xo, p);
  run_inverse_batch(u, p, ctx);
  noise_->inverse(u, ctx);
  const auto t0 = std::chrono::steady_clock::now();
  for (int64_t v : u) ctx.aux->encode_wide(static_cast<uint64_t>(v - noise_begin_), noise_width_);
  if (ctx.coding_seconds) {
    *ctx.coding_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
}

double FlowDequantizer::log2_q(std::span<const int32_t> xo, std::span<const double> u) const {
  double total = 0;
  for (size_t i = 0; i < xo.size(); ++i) {
    double s, t;
    affine(xo[i], s, t);
    const double y = std::log(u[i]) - std::log1p(-u[i]);
    const double eps = (y - t) / std::exp(s);
    // q(u) = p(eps) / (a * sigmoid'(y))
    total += logistic_log2_density(eps, 0.0, 1.0) - s * std::numbers::log2e - logistic_log2_density(y, 0.0, 1.0);
  }
  return total;
}

json FlowDequantizer::to_json() const {
  return {{"kind", "flow"},
          {"scale_weight", encode_double(params_.scale_weight)},
          {"scale_bias", encode_double(params_.scale_bias)},
          {"scale_bound", encode_double(params_.scale_bound)},
          {"shift_weight", encode_double(params_.shift_weight)},
          {"shift_bias", encode_double(params_.shift_bias)},
          {"y_limit", encode_double(params_.y_limit)}};
}

FlowDequantizer::Params FlowDequantizer::params_from_json(const json& j) {
  Params p;
  p.scale_weight = decode_double(j.at("scale_weight"));
  p.scale_bias = decode_double(j.at("scale_bias"));
  p.scale_bound = decode_double(j.at("scale_bound"));
  p.shift_weight = decode_double(j.at("shift_weight"));
  p.shift_bias = decode_double(j.at("shift_bias"));
  p.y_limit = decode_double(j.at("y_limit"));
  return p;
}

std::unique_ptr<Dequantizer> dequantizer_from_json(const json& j, int64_t range_lo, int64_t range_hi,
                                                   const Precision& precision, int K) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "uniform") return std::make_unique<UniformDequantizer>(precision);
    if (kind == "flow") {
      return std::make_unique<FlowDequantizer>(FlowDequantizer::params_from_json(j), range_lo, range_hi,
                                               precision, K);
    }
    fail(ErrorCode::kModel, "unknown dequantizer kind '" + kind + "'");
  } catch (const json::exception& e) {
    fail(ErrorCode::kModel, std::string("dequantizer: ") + e.what());
  }
}

}  // namespace iflow
