// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/prior.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "iflow/errors.hpp"

namespace iflow {

using json = nlohmann::json;

json PriorSpec::to_json() const {
  if (kind == Kind::kUniform) return {{"kind", "uniform"}, {"low", low}, {"high", high}};
  return {{"kind", "logistic"},
          {"loc", encode_double(loc)},
          {"scale", encode_double(scale)},
          {"clamp", encode_double(clamp)}};
}

PriorSpec PriorSpec::from_json(const json& j) {
  PriorSpec p;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "uniform") {
      p.kind = Kind::kUniform;
      p.low = j.at("low").get<int64_t>();
      p.high = j.at("high").get<int64_t>();
    } else if (kind == "logistic") {
      p.kind = Kind::kLogistic;
      p.loc = decode_double(j.at("loc"));
      p.scale = decode_double(j.at("scale"));
      p.clamp = j.contains("clamp") ? decode_double(j.at("clamp")) : 30.0;
    } else {
      fail(ErrorCode::kModel, "unknown prior kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kModel, std::string("prior: ") + e.what());
  }
  return p;
}

Precision squash_grid_precision(const Precision& precision) {
  Precision grid = precision;
  grid.h = std::max(precision.h, precision.k - kSquashCellBits);
  return grid;
}

Prior::Prior(const PriorSpec& spec, const Precision& precision, int K)
    : spec_(spec), precision_(precision), K_(K) {
  precision.validate(K);
  if (spec.kind == PriorSpec::Kind::kUniform) {
    if (spec.high <= spec.low || ((static_cast<uint64_t>(spec.high - spec.low)) >> K) != 0) {
      fail(ErrorCode::kModel, "uniform prior needs low < high and high - low < 2^K");
    }
    return;
  }
  if (!(spec.scale > 0) || !(spec.clamp > 0) || !std::isfinite(spec.loc)) {
    fail(ErrorCode::kModel, "logistic prior needs positive scale and clamp");
  }
  cdf_ = std::make_unique<ElementwiseLayer>(std::make_unique<LogisticCdfFn>(spec.loc, spec.scale),
                                            IntervalStrategy::kUniformZ, spec.loc - spec.clamp * spec.scale,
                                            spec.loc + spec.clamp * spec.scale, squash_grid_precision(precision), K, true);
  u_begin_ = cdf_->transform().z_begin();
  u_width_ = static_cast<uint64_t>(cdf_->transform().z_end() - u_begin_);
}

double Prior::log2_density(double z) const {
  if (spec_.kind == PriorSpec::Kind::kUniform) {
    if (z < static_cast<double>(spec_.low) || z >= static_cast<double>(spec_.high)) {
      return -std::numeric_limits<double>::infinity();
    }
    return -std::log2(static_cast<double>(spec_.high - spec_.low));
  }
  return logistic_log2_density(z, spec_.loc, spec_.scale);
}

namespace {

struct Clock {
  explicit Clock(double* sink) : sink_(sink), t0_(std::chrono::steady_clock::now()) {}
  ~Clock() {
    if (sink_) *sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }
  double* sink_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace

void Prior::encode(std::span<const int64_t> z, LayerContext& ctx) const {
  const int k = precision_.k;
  if (spec_.kind == PriorSpec::Kind::kUniform) {
    const int64_t lo = spec_.low << k;
    const int64_t hi = spec_.high << k;
    const uint64_t width = static_cast<uint64_t>(spec_.high - spec_.low);
    Clock clock(ctx.coding_seconds);
    for (int64_t v : z) {
      if (v < lo || v >= hi) fail(ErrorCode::kDomain, "latent value outside the uniform prior support");
      const uint64_t off = static_cast<uint64_t>(v - lo);
      ctx.aux->encode_bits(off & ((uint64_t{1} << k) - 1), k);
      ctx.aux->encode(static_cast<uint32_t>(off >> k), static_cast<uint32_t>(width));
    }
    return;
  }
  thread_local std::vector<int64_t> u;
  u.assign(z.begin(), z.end());
  cdf_->forward(u, ctx);
  Clock clock(ctx.coding_seconds);
  for (int64_t v : u) ctx.aux->encode_wide(static_cast<uint64_t>(v - u_begin_), u_width_);
}

void Prior::decode(std::span<int64_t> z, LayerContext& ctx) const {
  const int k = precision_.k;
  if (spec_.kind == PriorSpec::Kind::kUniform) {
    const uint64_t width = static_cast<uint64_t>(spec_.high - spec_.low);
    Clock clock(ctx.coding_seconds);
    for (size_t i = z.size(); i-- > 0;) {
      const uint64_t hi = ctx.aux->decode(static_cast<uint32_t>(width));
      const uint64_t lo = ctx.aux->decode_bits(k);
      z[i] = (spec_.low << k) + static_cast<int64_t>((hi << k) | lo);
    }
    return;
  }
  {
    Clock clock(ctx.coding_seconds);
    for (size_t i = z.size(); i-- > 0;) z[i] = u_begin_ + static_cast<int64_t>(ctx.aux->decode_wide(u_width_));
  }
  cdf_->inverse(z, ctx);
}

}  // namespace iflow
