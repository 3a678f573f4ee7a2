// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/monotone.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <string>

#include "iflow/errors.hpp"

namespace iflow {

namespace {

constexpr double kLog2E = std::numbers::log2e;

// log(sigmoid'(y)) = -|y| - 2 log1p(exp(-|y|))
double log_sigmoid_derivative(double y) {
  const double a = std::fabs(y);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

double sigmoid(double y) {
  if (y >= 0) return 1.0 / (1.0 + std::exp(-y));
  const double e = std::exp(y);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double require_param(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorCode::kModel, std::string("monotone function is missing '") + key + "'");
  return decode_double(j.at(key));
}

}  // namespace

nlohmann::json encode_double(double v) {
  if (!std::isfinite(v)) fail(ErrorCode::kModel, "non-finite parameter cannot be stored");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return std::string(buf);
}

double decode_double(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) fail(ErrorCode::kModel, "expected a number or hex-float string");
  const std::string s = j.get<std::string>();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    fail(ErrorCode::kModel, "malformed number '" + s + "'");
  }
  return v;
}

double MonotoneFn::log2_derivative(double x) const {
  return std::log2(std::fabs(derivative(x)));
}

std::unique_ptr<MonotoneFn> monotone_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type")) fail(ErrorCode::kModel, "monotone function needs a 'type'");
  const std::string t = j.at("type").get<std::string>();
  if (t == "affine") return std::make_unique<AffineFn>(require_param(j, "scale"), require_param(j, "shift"));
  if (t == "softstep") {
    return std::make_unique<SoftStepFn>(require_param(j, "alpha"), require_param(j, "width"),
                                        require_param(j, "center"), require_param(j, "log_scale"),
                                        require_param(j, "shift"));
  }
  if (t == "sigmoid") return std::make_unique<SigmoidFn>();
  if (t == "logit") return std::make_unique<LogitFn>();
  if (t == "exp") return std::make_unique<ExpFn>();
  if (t == "logistic_cdf") {
    return std::make_unique<LogisticCdfFn>(require_param(j, "loc"), require_param(j, "scale"));
  }
  fail(ErrorCode::kModel, "unknown monotone function type '" + t + "'");
}

AffineFn::AffineFn(double scale, double shift) : scale_(scale), shift_(shift) {
  if (!(scale != 0) || !std::isfinite(scale) || !std::isfinite(shift)) {
    fail(ErrorCode::kModel, "affine function needs a finite non-zero scale");
  }
}

nlohmann::json AffineFn::to_json() const {
  return {{"type", "affine"}, {"scale", encode_double(scale_)}, {"shift", encode_double(shift_)}};
}

SoftStepFn::SoftStepFn(double alpha, double width, double center, double log_scale, double shift)
    : alpha_(alpha), width_(width), center_(center), log_scale_(log_scale), shift_(shift),
      scale_(std::exp(log_scale)) {
  if (!(alpha > -1.0) || !(width > 0) || !std::isfinite(alpha) || !std::isfinite(width) ||
      !std::isfinite(center) || !std::isfinite(log_scale) || !std::isfinite(shift)) {
    fail(ErrorCode::kModel, "softstep needs alpha > -1, width > 0 and finite parameters");
  }
}

double SoftStepFn::eval(double x) const {
  return scale_ * (x + alpha_ * width_ * std::tanh((x - center_) / width_)) + shift_;
}

double SoftStepFn::eval_inverse(double z) const {
  // Solve g(x) = y with g(x) = x + alpha w tanh((x - c) / w); |g(x) - x| <= |alpha| w
  // brackets the root. Newton steps are accepted only inside the bracket.
  const double y = (z - shift_) / scale_;
  const double reach = std::fabs(alpha_) * width_;
  double lo = y - reach, hi = y + reach;
  double x = y;
  for (int it = 0; it < 200; ++it) {
    const double th = std::tanh((x - center_) / width_);
    const double g = x + alpha_ * width_ * th - y;
    if (g == 0) return x;
    if (g > 0) hi = x; else lo = x;
    const double d = 1.0 + alpha_ * (1.0 - th * th);
    double next = x - g / d;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x || hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::fabs(x)) return next;
    x = next;
  }
  return x;
}

double SoftStepFn::derivative(double x) const {
  const double th = std::tanh((x - center_) / width_);
  return scale_ * (1.0 + alpha_ * (1.0 - th * th));
}

double SoftStepFn::log2_derivative(double x) const {
  const double th = std::tanh((x - center_) / width_);
  return log_scale_ * kLog2E + std::log2(1.0 + alpha_ * (1.0 - th * th));
}

nlohmann::json SoftStepFn::to_json() const {
  return {{"type", "softstep"},
          {"alpha", encode_double(alpha_)},
          {"width", encode_double(width_)},
          {"center", encode_double(center_)},
          {"log_scale", encode_double(log_scale_)},
          {"shift", encode_double(shift_)}};
}

double SigmoidFn::eval(double x) const { return sigmoid(x); }
double SigmoidFn::eval_inverse(double z) const { return logit(z); }
double SigmoidFn::derivative(double x) const {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}
double SigmoidFn::log2_derivative(double x) const { return log_sigmoid_derivative(x) * kLog2E; }
nlohmann::json SigmoidFn::to_json() const { return {{"type", "sigmoid"}}; }

double LogitFn::eval(double x) const { return logit(x); }
double LogitFn::eval_inverse(double z) const { return sigmoid(z); }
double LogitFn::derivative(double x) const { return 1.0 / (x * (1.0 - x)); }
nlohmann::json LogitFn::to_json() const { return {{"type", "logit"}}; }

double ExpFn::eval(double x) const { return std::exp(x); }
double ExpFn::eval_inverse(double z) const { return std::log(z); }
double ExpFn::derivative(double x) const { return std::exp(x); }
double ExpFn::log2_derivative(double x) const { return x * kLog2E; }
nlohmann::json ExpFn::to_json() const { return {{"type", "exp"}}; }

LogisticCdfFn::LogisticCdfFn(double loc, double scale) : loc_(loc), scale_(scale) {
  if (!(scale > 0) || !std::isfinite(scale) || !std::isfinite(loc)) {
    fail(ErrorCode::kModel, "logistic needs a finite positive scale");
  }
}

double LogisticCdfFn::eval(double x) const { return sigmoid((x - loc_) / scale_); }
double LogisticCdfFn::eval_inverse(double z) const { return loc_ + scale_ * logit(z); }
double LogisticCdfFn::derivative(double x) const {
  return std::exp2(logistic_log2_density(x, loc_, scale_));
}
double LogisticCdfFn::log2_derivative(double x) const {
  return logistic_log2_density(x, loc_, scale_);
}
nlohmann::json LogisticCdfFn::to_json() const {
  return {{"type", "logistic_cdf"}, {"loc", encode_double(loc_)}, {"scale", encode_double(scale_)}};
}

double logistic_log2_density(double x, double loc, double scale) {
  return (log_sigmoid_derivative((x - loc) / scale) - std::log(scale)) * kLog2E;
}

}  // namespace iflow
