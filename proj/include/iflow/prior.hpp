// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Base distributions for the latent z, coded at k-precision (bin width 2^-k).

#pragma once

#include <memory>
#include <span>

#include <json.hpp>

#include "iflow/layers.hpp"

namespace iflow {

struct PriorSpec {
  enum class Kind { kLogistic, kUniform };
  Kind kind = Kind::kLogistic;
  // logistic(loc, scale), truncated to loc +- clamp * scale for coding
  double loc = 0.0;
  double scale = 1.0;
  double clamp = 30.0;
  // uniform on [low, high) with integer bounds
  int64_t low = 0;
  int64_t high = 256;

  nlohmann::json to_json() const;
  static PriorSpec from_json(const nlohmann::json& j);
};

// Grid precision for functions squashing the real line into a bounded
// interval (the prior CDF, the dequantizer sigmoid). Their grids are uniform
// in the output, so the end cells swallow whole tails: at spacing 2^-h the last
// cell of the logistic CDF starts near z = h ln 2. A spacing of 2^-(k-12)
// pushes that past |z| = 11 at k = 28 while every cell still spans 2^12
// output units, which keeps the slope numerator accurate.
inline constexpr int kSquashCellBits = 12;
Precision squash_grid_precision(const Precision& precision);

class Prior {
 public:
  Prior(const PriorSpec& spec, const Precision& precision, int K = 32);

  const PriorSpec& spec() const { return spec_; }
  double log2_density(double z) const;

  // Encodes a vector of mantissas (growing the stream by about
  // k - log2 p(z) bits each); decode is the exact inverse.
  void encode(std::span<const int64_t> z, LayerContext& ctx) const;
  void decode(std::span<int64_t> z, LayerContext& ctx) const;

 private:
  PriorSpec spec_;
  Precision precision_;
  int K_;
  std::unique_ptr<ElementwiseLayer> cdf_;  // logistic only
  int64_t u_begin_ = 0;
  uint64_t u_width_ = 0;
};

}  // namespace iflow
