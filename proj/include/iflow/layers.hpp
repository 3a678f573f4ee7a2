// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Flow layers. Each layer has an exactly invertible quantized form acting on
// k-precision mantissas (consuming or producing auxiliary bits) and a
// continuous form used for reference likelihoods.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iflow/elementwise.hpp"
#include "iflow/fixed_point.hpp"
#include "iflow/linalg.hpp"
#include "iflow/mst.hpp"
#include "iflow/ubcs.hpp"

namespace iflow {

struct TensorShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  size_t size() const {
    return static_cast<size_t>(channels) * static_cast<size_t>(height) * static_cast<size_t>(width);
  }
  size_t plane() const { return static_cast<size_t>(height) * static_cast<size_t>(width); }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

struct LayerContext {
  Precision precision;
  UbcsCoder* aux = nullptr;
  // Accumulates time spent inside entropy-coding calls when non-null.
  double* coding_seconds = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string_view kind() const = 0;
  virtual void forward(std::span<int64_t> x, LayerContext& ctx) const = 0;
  virtual void inverse(std::span<int64_t> z, LayerContext& ctx) const = 0;
  // Applies the continuous map in place and returns log2 |det J|.
  virtual double forward_continuous(std::span<double> x) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

// Builds a layer from its model-file description. Precision-dependent state
// (grids, rational scales) is computed here.
std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j, const TensorShape& shape,
                                       const Precision& precision, int K = 32);

// Runs an MST batch and charges the elapsed time to ctx.coding_seconds.
void run_forward_batch(std::span<int64_t> v, std::span<const ElementPlan> plans, LayerContext& ctx);
void run_inverse_batch(std::span<int64_t> v, std::span<const ElementPlan> plans, LayerContext& ctx);

// z = f(x) for every element with one monotone function.
class ElementwiseLayer final : public Layer {
 public:
  ElementwiseLayer(std::unique_ptr<MonotoneFn> fn, IntervalStrategy strategy, double lo, double hi,
                   const Precision& precision, int K = 32, bool escalate_end_cells = false);
  std::string_view kind() const override { return "elementwise"; }
  void forward(std::span<int64_t> x, LayerContext& ctx) const override;
  void inverse(std::span<int64_t> z, LayerContext& ctx) const override;
  double forward_continuous(std::span<double> x) const override;
  nlohmann::json to_json() const override;

  const ElementwiseTransform& transform() const { return transform_; }

 private:
  ElementwiseTransform transform_;
  IntervalStrategy strategy_;
  double lo_, hi_;
};

// z = scale[c] * x + shift[c] per channel.
class ChannelScaleLayer final : public Layer {
 public:
  ChannelScaleLayer(std::vector<double> scale, std::vector<double> shift, const TensorShape& shape,
                    const Precision& precision, int K = 32);
  std::string_view kind() const override { return "channel_scale"; }
  void forward(std::span<int64_t> x, LayerContext& ctx) const override;
  void inverse(std::span<int64_t> z, LayerContext& ctx) const override;
  double forward_continuous(std::span<double> x) const override;
  nlohmann::json to_json() const override;

 private:
  std::vector<double> scale_, shift_;
  TensorShape shape_;
  std::vector<ElementPlan> plans_;  // one per element
};

// Invertible 1x1 convolution across channels, factored W = P L D U. The unit
// triangular factors add quantized sums to each element (bit-free and exactly
// invertible); D is a per-channel MST.
class Conv1x1Layer final : public Layer {
 public:
  Conv1x1Layer(std::vector<double> weight, const TensorShape& shape, const Precision& precision,
               int K = 32);
  std::string_view kind() const override { return "conv1x1"; }
  void forward(std::span<int64_t> x, LayerContext& ctx) const override;
  void inverse(std::span<int64_t> z, LayerContext& ctx) const override;
  double forward_continuous(std::span<double> x) const override;
  nlohmann::json to_json() const override;

  const LuFactors& factors() const { return lu_; }

 private:
  std::vector<double> weight_;
  TensorShape shape_;
  LuFactors lu_;
  std::vector<ElementPlan> plans_;
  int k_;
};

// Fixed-weight conditioner producing a bounded log-scale and a shift for each
// element of one split from the elements preceding that split.
struct Conditioner {
  int outputs = 0;
  int inputs = 0;
  std::vector<double> scale_weight;  // outputs x inputs
  std::vector<double> scale_bias;    // outputs
  std::vector<double> shift_weight;  // outputs x inputs
  std::vector<double> shift_bias;    // outputs

  void apply(std::span<const double> context, double scale_bound, std::span<double> log_scale,
             std::span<double> shift) const;
  nlohmann::json to_json() const;
  static Conditioner from_json(const nlohmann::json& j, int outputs, int inputs);
};

enum class ElementKind { kAffine, kSoftStep };

// Splits the flattened input into m consecutive parts; part i is transformed
// elementwise with parameters conditioned on parts < i. Forward runs parts
// from last to first and the inverse from first to last, so every conditioner
// sees the original values. A coupling layer is the m = 2 case with an
// identity first part.
class AutoregressiveLayer final : public Layer {
 public:
  struct Options {
    std::vector<int> split;
    bool identity_first = false;
    ElementKind element = ElementKind::kAffine;
    double scale_bound = 1.0;
    double softstep_alpha = 0.5;
    double softstep_width = 1.0;
    double domain_lo = -4096.0;
    double domain_hi = 4096.0;
  };

  AutoregressiveLayer(Options options, std::vector<Conditioner> conditioners, const TensorShape& shape,
                      const Precision& precision, int K = 32);
  std::string_view kind() const override { return options_.identity_first ? "coupling" : "autoregressive"; }
  void forward(std::span<int64_t> x, LayerContext& ctx) const override;
  void inverse(std::span<int64_t> z, LayerContext& ctx) const override;
  double forward_continuous(std::span<double> x) const override;
  nlohmann::json to_json() const override;

 private:
  size_t offset(size_t part) const { return offsets_[part]; }
  const Conditioner& conditioner_for(size_t part) const;
  void plans_for(size_t part, std::span<const int64_t> values, bool forward,
                 std::vector<ElementPlan>& plans, const Precision& p) const;

  Options options_;
  std::vector<Conditioner> conditioners_;
  std::vector<size_t> offsets_;
  TensorShape shape_;
  Precision precision_;
  int K_;
};

}  // namespace iflow
