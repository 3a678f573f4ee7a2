// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/layers.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>

#include "iflow/errors.hpp"

namespace iflow {

namespace {

using json = nlohmann::json;

struct CodingClock {
  explicit CodingClock(double* sink) : sink_(sink) {
    if (sink_) start_ = std::chrono::steady_clock::now();
  }
  ~CodingClock() {
    if (sink_) *sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  double* sink_;
  std::chrono::steady_clock::time_point start_;
};

json encode_vector(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(encode_double(x));
  return a;
}

std::vector<double> decode_vector(const json& j, size_t expected, const char* what) {
  if (!j.is_array() || j.size() != expected) {
    fail(ErrorCode::kModel, std::string(what) + " must be an array of " + std::to_string(expected) + " numbers");
  }
  std::vector<double> v;
  v.reserve(expected);
  for (const auto& e : j) v.push_back(decode_double(e));
  return v;
}

json encode_matrix(const std::vector<double>& m, int rows, int cols) {
  json a = json::array();
  for (int r = 0; r < rows; ++r) {
    json row = json::array();
    for (int c = 0; c < cols; ++c) row.push_back(encode_double(m[static_cast<size_t>(r) * cols + c]));
    a.push_back(std::move(row));
  }
  return a;
}

std::vector<double> decode_matrix(const json& j, int rows, int cols, const char* what) {
  if (!j.is_array() || j.size() != static_cast<size_t>(rows)) {
    fail(ErrorCode::kModel, std::string(what) + " must have " + std::to_string(rows) + " rows");
  }
  std::vector<double> m;
  m.reserve(static_cast<size_t>(rows) * cols);
  for (const auto& row : j) {
    auto r = decode_vector(row, static_cast<size_t>(cols), what);
    m.insert(m.end(), r.begin(), r.end());
  }
  return m;
}

// floor(sum) as a mantissa increment, checked against overflow.
int64_t quantized_sum(double s) {
  const double f = std::floor(s);
  if (!(f > -0x1p62 && f < 0x1p62)) fail(ErrorCode::kRange, "triangular update overflows a mantissa");
  return static_cast<int64_t>(f);
}

}  // namespace

void run_forward_batch(std::span<int64_t> v, std::span<const ElementPlan> plans, LayerContext& ctx) {
  CodingClock clock(ctx.coding_seconds);
  mst_forward_batch(v, plans, ctx.precision.b, *ctx.aux);
}

void run_inverse_batch(std::span<int64_t> v, std::span<const ElementPlan> plans, LayerContext& ctx) {
  CodingClock clock(ctx.coding_seconds);
  mst_inverse_batch(v, plans, ctx.precision.b, *ctx.aux);
}

// ---------------------------------------------------------------------------

ElementwiseLayer::ElementwiseLayer(std::unique_ptr<MonotoneFn> fn, IntervalStrategy strategy, double lo,
                                   double hi, const Precision& precision, int K, bool escalate_end_cells)
    : transform_(std::move(fn), precision, strategy, lo, hi, escalate_end_cells, K),
      strategy_(strategy), lo_(lo), hi_(hi) {}

void ElementwiseLayer::forward(std::span<int64_t> x, LayerContext& ctx) const {
  thread_local std::vector<ElementPlan> plans;
  plans.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) plans[i] = transform_.plan_forward(x[i]);
  run_forward_batch(x, plans, ctx);
}

void ElementwiseLayer::inverse(std::span<int64_t> z, LayerContext& ctx) const {
  thread_local std::vector<ElementPlan> plans;
  plans.resize(z.size());
  for (size_t i = 0; i < z.size(); ++i) plans[i] = transform_.plan_inverse(z[i]);
  run_inverse_batch(z, plans, ctx);
}

double ElementwiseLayer::forward_continuous(std::span<double> x) const {
  const MonotoneFn& f = transform_.fn();
  double logdet = 0;
  for (double& v : x) {
    logdet += f.log2_derivative(v);
    v = f.eval(v);
  }
  return logdet;
}

json ElementwiseLayer::to_json() const {
  return {{"kind", "elementwise"},
          {"fn", transform_.fn().to_json()},
          {"strategy", std::string(strategy_name(strategy_))},
          {"domain", json::array({encode_double(lo_), encode_double(hi_)})}};
}

// ---------------------------------------------------------------------------

ChannelScaleLayer::ChannelScaleLayer(std::vector<double> scale, std::vector<double> shift,
                                     const TensorShape& shape, const Precision& precision, int K)
    : scale_(std::move(scale)), shift_(std::move(shift)), shape_(shape) {
  const size_t C = static_cast<size_t>(shape.channels);
  if (scale_.size() != C || shift_.size() != C) {
    fail(ErrorCode::kModel, "channel_scale needs one scale and shift per channel");
  }
  plans_.resize(shape.size());
  for (size_t c = 0; c < C; ++c) {
    if (!(scale_[c] != 0)) fail(ErrorCode::kModel, "channel_scale entries must be non-zero");
    ElementPlan p;
    p.scale = approximate_scale(std::fabs(scale_[c]), precision.S, K);
    p.negate = scale_[c] < 0;
    p.out_offset = quantize_mantissa(shift_[c], precision.k);
    for (size_t e = 0; e < shape.plane(); ++e) plans_[c * shape.plane() + e] = p;
  }
}

void ChannelScaleLayer::forward(std::span<int64_t> x, LayerContext& ctx) const {
  run_forward_batch(x, plans_, ctx);
}

void ChannelScaleLayer::inverse(std::span<int64_t> z, LayerContext& ctx) const {
  run_inverse_batch(z, plans_, ctx);
}

double ChannelScaleLayer::forward_continuous(std::span<double> x) const {
  double logdet = 0;
  const size_t plane = shape_.plane();
  for (size_t c = 0; c < scale_.size(); ++c) {
    for (size_t e = 0; e < plane; ++e) {
      double& v = x[c * plane + e];
      v = scale_[c] * v + shift_[c];
    }
    logdet += static_cast<double>(plane) * std::log2(std::fabs(scale_[c]));
  }
  return logdet;
}

json ChannelScaleLayer::to_json() const {
  return {{"kind", "channel_scale"}, {"scale", encode_vector(scale_)}, {"shift", encode_vector(shift_)}};
}

// ---------------------------------------------------------------------------

Conv1x1Layer::Conv1x1Layer(std::vector<double> weight, const TensorShape& shape, const Precision& precision,
                           int K)
    : weight_(std::move(weight)), shape_(shape), k_(precision.k) {
  lu_ = lu_decompose(weight_, shape.channels);
  plans_.resize(shape.size());
  const size_t plane = shape.plane();
  for (size_t c = 0; c < static_cast<size_t>(shape.channels); ++c) {
    ElementPlan p;
    p.scale = approximate_scale(std::fabs(lu_.diag[c]), precision.S, K);
    p.negate = lu_.diag[c] < 0;
    for (size_t e = 0; e < plane; ++e) plans_[c * plane + e] = p;
  }
}

void Conv1x1Layer::forward(std::span<int64_t> x, LayerContext& ctx) const {
  const size_t C = static_cast<size_t>(shape_.channels);
  const size_t plane = shape_.plane();
  const std::vector<double>& U = lu_.upper;
  const std::vector<double>& L = lu_.lower;
  // x <- U x, ascending rows so each row reads untouched values.
  for (size_t pos = 0; pos < plane; ++pos) {
    for (size_t i = 0; i < C; ++i) {
      double s = 0;
      for (size_t j = i + 1; j < C; ++j) s += U[i * C + j] * static_cast<double>(x[j * plane + pos]);
      x[i * plane + pos] += quantized_sum(s);
    }
  }
  run_forward_batch(x, plans_, ctx);
  std::vector<int64_t> column(C);
  for (size_t pos = 0; pos < plane; ++pos) {
    // x <- L x, descending rows.
    for (size_t i = C; i-- > 0;) {
      double s = 0;
      for (size_t j = 0; j < i; ++j) s += L[i * C + j] * static_cast<double>(x[j * plane + pos]);
      x[i * plane + pos] += quantized_sum(s);
    }
    for (size_t i = 0; i < C; ++i) column[static_cast<size_t>(lu_.pivot[i])] = x[i * plane + pos];
    for (size_t i = 0; i < C; ++i) x[i * plane + pos] = column[i];
  }
}

void Conv1x1Layer::inverse(std::span<int64_t> z, LayerContext& ctx) const {
  const size_t C = static_cast<size_t>(shape_.channels);
  const size_t plane = shape_.plane();
  const std::vector<double>& U = lu_.upper;
  const std::vector<double>& L = lu_.lower;
  std::vector<int64_t> column(C);
  for (size_t pos = 0; pos < plane; ++pos) {
    for (size_t i = 0; i < C; ++i) column[i] = z[static_cast<size_t>(lu_.pivot[i]) * plane + pos];
    for (size_t i = 0; i < C; ++i) z[i * plane + pos] = column[i];
    for (size_t i = 0; i < C; ++i) {
      double s = 0;
      for (size_t j = 0; j < i; ++j) s += L[i * C + j] * static_cast<double>(z[j * plane + pos]);
      z[i * plane + pos] -= quantized_sum(s);
    }
  }
  run_inverse_batch(z, plans_, ctx);
  for (size_t pos = 0; pos < plane; ++pos) {
    for (size_t i = C; i-- > 0;) {
      double s = 0;
      for (size_t j = i + 1; j < C; ++j) s += U[i * C + j] * static_cast<double>(z[j * plane + pos]);
      z[i * plane + pos] -= quantized_sum(s);
    }
  }
}

double Conv1x1Layer::forward_continuous(std::span<double> x) const {
  const size_t C = static_cast<size_t>(shape_.channels);
  const size_t plane = shape_.plane();
  std::vector<double> column(C);
  for (size_t pos = 0; pos < plane; ++pos) {
    for (size_t i = 0; i < C; ++i) {
      double s = 0;
      for (size_t j = 0; j < C; ++j) s += weight_[i * C + j] * x[j * plane + pos];
      column[i] = s;
    }
    for (size_t i = 0; i < C; ++i) x[i * plane + pos] = column[i];
  }
  return static_cast<double>(plane) * lu_.log2_abs_det;
}

json Conv1x1Layer::to_json() const {
  return {{"kind", "conv1x1"}, {"weight", encode_matrix(weight_, shape_.channels, shape_.channels)}};
}

// ---------------------------------------------------------------------------

void Conditioner::apply(std::span<const double> context, double scale_bound, std::span<double> log_scale,
                        std::span<double> shift) const {
  const size_t in = static_cast<size_t>(inputs);
  for (size_t o = 0; o < static_cast<size_t>(outputs); ++o) {
    double a = scale_bias[o];
    double t = shift_bias[o];
    const double* ws = scale_weight.data() + o * in;
    const double* wt = shift_weight.data() + o * in;
    for (size_t j = 0; j < in; ++j) {
      a += ws[j] * context[j];
      t += wt[j] * context[j];
    }
    log_scale[o] = scale_bound * std::tanh(a);
    shift[o] = t;
  }
}

json Conditioner::to_json() const {
  return {{"scale_weight", encode_matrix(scale_weight, outputs, inputs)},
          {"scale_bias", encode_vector(scale_bias)},
          {"shift_weight", encode_matrix(shift_weight, outputs, inputs)},
          {"shift_bias", encode_vector(shift_bias)}};
}

Conditioner Conditioner::from_json(const json& j, int outputs, int inputs) {
  Conditioner c;
  c.outputs = outputs;
  c.inputs = inputs;
  c.scale_weight = inputs > 0 ? decode_matrix(j.at("scale_weight"), outputs, inputs, "scale_weight")
                              : std::vector<double>{};
  c.shift_weight = inputs > 0 ? decode_matrix(j.at("shift_weight"), outputs, inputs, "shift_weight")
                              : std::vector<double>{};
  c.scale_bias = decode_vector(j.at("scale_bias"), static_cast<size_t>(outputs), "scale_bias");
  c.shift_bias = decode_vector(j.at("shift_bias"), static_cast<size_t>(outputs), "shift_bias");
  return c;
}

AutoregressiveLayer::AutoregressiveLayer(Options options, std::vector<Conditioner> conditioners,
                                         const TensorShape& shape, const Precision& precision, int K)
    : options_(std::move(options)), conditioners_(std::move(conditioners)), shape_(shape),
      precision_(precision), K_(K) {
  size_t total = 0;
  for (int n : options_.split) {
    if (n < 1) fail(ErrorCode::kModel, "split sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<size_t>(n);
  }
  offsets_.push_back(total);
  if (total != shape.size()) fail(ErrorCode::kModel, "split sizes must add up to the tensor size");
  if (options_.identity_first && options_.split.size() != 2) {
    fail(ErrorCode::kModel, "coupling needs exactly two parts");
  }
  const size_t active = options_.split.size() - (options_.identity_first ? 1 : 0);
  if (conditioners_.size() != active) fail(ErrorCode::kModel, "one conditioner per transformed part");
  for (size_t i = options_.identity_first ? 1 : 0; i < options_.split.size(); ++i) {
    const Conditioner& c = conditioner_for(i);
    if (c.outputs != options_.split[i] || c.inputs != static_cast<int>(offsets_[i])) {
      fail(ErrorCode::kModel, "conditioner shape does not match its part");
    }
  }
  if (!(options_.scale_bound > 0) || !std::isfinite(options_.scale_bound)) {
    fail(ErrorCode::kModel, "scale_bound must be positive");
  }
  if (options_.element == ElementKind::kSoftStep) {
    // Validates the parameters once; per-element instances only vary scale and shift.
    SoftStepFn probe(options_.softstep_alpha, options_.softstep_width, 0.0, 0.0, 0.0);
    if (!(options_.domain_lo < options_.domain_hi)) fail(ErrorCode::kModel, "empty softstep domain");
  }
}

const Conditioner& AutoregressiveLayer::conditioner_for(size_t part) const {
  return conditioners_[options_.identity_first ? part - 1 : part];
}

void AutoregressiveLayer::plans_for(size_t part, std::span<const int64_t> values, bool forward,
                                    std::vector<ElementPlan>& plans, const Precision& p) const {
  const size_t begin = offset(part), end = offset(part + 1), n = end - begin;
  thread_local std::vector<double> context, log_scale, shift;
  context.resize(begin);
  log_scale.resize(n);
  shift.resize(n);
  for (size_t j = 0; j < begin; ++j) context[j] = mantissa_to_double(values[j], p.k);
  conditioner_for(part).apply(context, options_.scale_bound, log_scale, shift);
  plans.resize(n);
  for (size_t e = 0; e < n; ++e) {
    if (options_.element == ElementKind::kAffine) {
      ElementPlan q;
      q.scale = approximate_scale(std::exp(log_scale[e]), p.S, K_);
      q.out_offset = quantize_mantissa(shift[e], p.k);
      plans[e] = q;
    } else {
      const SoftStepFn fn(options_.softstep_alpha, options_.softstep_width, 0.0, log_scale[e], shift[e]);
      const PiecewiseGrid grid(fn, p.k, p.h, IntervalStrategy::kUniformX, options_.domain_lo, options_.domain_hi);
      const int64_t v = values[begin + e];
      plans[e] = plan_from_cell(forward ? grid.locate_x(v) : grid.locate_z(v), p.S, false, false, K_);
    }
  }
}

void AutoregressiveLayer::forward(std::span<int64_t> x, LayerContext& ctx) const {
  thread_local std::vector<ElementPlan> plans;
  const size_t first = options_.identity_first ? 1 : 0;
  for (size_t part = options_.split.size(); part-- > first;) {
    plans_for(part, x, true, plans, precision_);
    run_forward_batch(x.subspan(offset(part), offset(part + 1) - offset(part)), plans, ctx);
  }
}

void AutoregressiveLayer::inverse(std::span<int64_t> z, LayerContext& ctx) const {
  thread_local std::vector<ElementPlan> plans;
  const size_t first = options_.identity_first ? 1 : 0;
  for (size_t part = first; part < options_.split.size(); ++part) {
    plans_for(part, z, false, plans, precision_);
    run_inverse_batch(z.subspan(offset(part), offset(part + 1) - offset(part)), plans, ctx);
  }
}

double AutoregressiveLayer::forward_continuous(std::span<double> x) const {
  double logdet = 0;
  const size_t first = options_.identity_first ? 1 : 0;
  std::vector<double> log_scale, shift;
  for (size_t part = options_.split.size(); part-- > first;) {
    const size_t begin = offset(part), n = offset(part + 1) - begin;
    log_scale.resize(n);
    shift.resize(n);
    conditioner_for(part).apply(x.first(begin), options_.scale_bound, log_scale, shift);
    for (size_t e = 0; e < n; ++e) {
      double& v = x[begin + e];
      if (options_.element == ElementKind::kAffine) {
        v = std::exp(log_scale[e]) * v + shift[e];
        logdet += log_scale[e] * std::numbers::log2e;
      } else {
        const SoftStepFn fn(options_.softstep_alpha, options_.softstep_width, 0.0, log_scale[e], shift[e]);
        logdet += fn.log2_derivative(v);
        v = fn.eval(v);
      }
    }
  }
  return logdet;
}

json AutoregressiveLayer::to_json() const {
  json element;
  if (options_.element == ElementKind::kAffine) {
    element = {{"type", "affine"}};
  } else {
    element = {{"type", "softstep"},
               {"alpha", encode_double(options_.softstep_alpha)},
               {"width", encode_double(options_.softstep_width)},
               {"domain", json::array({encode_double(options_.domain_lo), encode_double(options_.domain_hi)})}};
  }
  json conds = json::array();
  for (const auto& c : conditioners_) conds.push_back(c.to_json());
  return {{"kind", std::string(kind())},
          {"split", options_.split},
          {"element", element},
          {"scale_bound", encode_double(options_.scale_bound)},
          {"conditioners", conds}};
}

// ---------------------------------------------------------------------------

std::unique_ptr<Layer> layer_from_json(const json& j, const TensorShape& shape, const Precision& precision,
                                       int K) {
  if (!j.is_object() || !j.contains("kind")) fail(ErrorCode::kModel, "layer needs a 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  try {
    if (kind == "elementwise") {
      const json& dom = j.at("domain");
      if (!dom.is_array() || dom.size() != 2) fail(ErrorCode::kModel, "elementwise domain must be [lo, hi]");
      return std::make_unique<ElementwiseLayer>(monotone_from_json(j.at("fn")),
                                                parse_strategy(j.at("strategy").get<std::string>()),
                                                decode_double(dom[0]), decode_double(dom[1]), precision, K);
    }
    if (kind == "channel_scale") {
      const size_t C = static_cast<size_t>(shape.channels);
      return std::make_unique<ChannelScaleLayer>(decode_vector(j.at("scale"), C, "scale"),
                                                 decode_vector(j.at("shift"), C, "shift"), shape, precision, K);
    }
    if (kind == "conv1x1") {
      return std::make_unique<Conv1x1Layer>(decode_matrix(j.at("weight"), shape.channels, shape.channels, "weight"),
                                            shape, precision, K);
    }
    if (kind == "coupling" || kind == "autoregressive") {
      AutoregressiveLayer::Options opt;
      opt.identity_first = kind == "coupling";
      opt.split = j.at("split").get<std::vector<int>>();
      opt.scale_bound = decode_double(j.at("scale_bound"));
      const json& el = j.at("element");
      const std::string et = el.at("type").get<std::string>();
      if (et == "affine") {
        opt.element = ElementKind::kAffine;
      } else if (et == "softstep") {
        opt.element = ElementKind::kSoftStep;
        opt.softstep_alpha = decode_double(el.at("alpha"));
        opt.softstep_width = decode_double(el.at("width"));
        const json& dom = el.at("domain");
        if (!dom.is_array() || dom.size() != 2) fail(ErrorCode::kModel, "softstep domain must be [lo, hi]");
        opt.domain_lo = decode_double(dom[0]);
        opt.domain_hi = decode_double(dom[1]);
      } else {
        fail(ErrorCode::kModel, "unknown element type '" + et + "'");
      }
      const json& cj = j.at("conditioners");
      if (!cj.is_array()) fail(ErrorCode::kModel, "conditioners must be an array");
      std::vector<Conditioner> conds;
      int offset = 0;
      for (size_t i = 0; i < opt.split.size(); ++i) {
        if (!(opt.identity_first && i == 0)) {
          const size_t ci = opt.identity_first ? i - 1 : i;
          if (ci >= cj.size()) fail(ErrorCode::kModel, "missing conditioner");
          conds.push_back(Conditioner::from_json(cj[ci], opt.split[i], offset));
        }
        offset += opt.split[i];
      }
      return std::make_unique<AutoregressiveLayer>(std::move(opt), std::move(conds), shape, precision, K);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kModel, "layer '" + kind + "': " + e.what());
  }
  fail(ErrorCode::kModel, "unknown layer kind '" + kind + "'");
}

}  // namespace iflow
