// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Strictly monotone scalar functions with closed-form (or safeguarded
// numerical) inverses. Elementwise flows approximate them piecewise-linearly.

#pragma once

#include <limits>
#include <memory>
#include <string_view>

#include <json.hpp>

namespace iflow {

class MonotoneFn {
 public:
  virtual ~MonotoneFn() = default;

  virtual std::string_view type() const = 0;
  virtual double eval(double x) const = 0;
  virtual double eval_inverse(double z) const = 0;
  virtual double derivative(double x) const = 0;
  virtual double log2_derivative(double x) const;
  virtual bool increasing() const { return true; }
  // Open natural domain of eval.
  virtual double domain_lo() const { return -std::numeric_limits<double>::infinity(); }
  virtual double domain_hi() const { return std::numeric_limits<double>::infinity(); }
  // Bound on |x - eval_inverse(eval(x))| in the working range.
  virtual double roundtrip_eps() const { return 1e-9; }

  virtual nlohmann::json to_json() const = 0;
  virtual std::unique_ptr<MonotoneFn> clone() const = 0;
};

std::unique_ptr<MonotoneFn> monotone_from_json(const nlohmann::json& j);

// z = scale * x + shift, scale != 0.
class AffineFn final : public MonotoneFn {
 public:
  AffineFn(double scale, double shift);
  std::string_view type() const override { return "affine"; }
  double eval(double x) const override { return scale_ * x + shift_; }
  double eval_inverse(double z) const override { return (z - shift_) / scale_; }
  double derivative(double) const override { return scale_; }
  bool increasing() const override { return scale_ > 0; }
  nlohmann::json to_json() const override;
  std::unique_ptr<MonotoneFn> clone() const override { return std::make_unique<AffineFn>(*this); }

 private:
  double scale_, shift_;
};

// z = exp(log_scale) * (x + alpha * width * tanh((x - center) / width)) + shift
// with alpha > -1; the slope stays within exp(log_scale) * [min(1, 1+alpha), max(1, 1+alpha)].
class SoftStepFn final : public MonotoneFn {
 public:
  SoftStepFn(double alpha, double width, double center, double log_scale, double shift);
  std::string_view type() const override { return "softstep"; }
  double eval(double x) const override;
  double eval_inverse(double z) const override;
  double derivative(double x) const override;
  double log2_derivative(double x) const override;
  nlohmann::json to_json() const override;
  std::unique_ptr<MonotoneFn> clone() const override { return std::make_unique<SoftStepFn>(*this); }

 private:
  double alpha_, width_, center_, log_scale_, shift_, scale_;
};

class SigmoidFn final : public MonotoneFn {
 public:
  std::string_view type() const override { return "sigmoid"; }
  double eval(double x) const override;
  double eval_inverse(double z) const override;
  double derivative(double x) const override;
  double log2_derivative(double x) const override;
  nlohmann::json to_json() const override;
  std::unique_ptr<MonotoneFn> clone() const override { return std::make_unique<SigmoidFn>(*this); }
};

class LogitFn final : public MonotoneFn {
 public:
  std::string_view type() const override { return "logit"; }
  double eval(double x) const override;
  double eval_inverse(double z) const override;
  double derivative(double x) const override;
  double domain_lo() const override { return 0.0; }
  double domain_hi() const override { return 1.0; }
  nlohmann::json to_json() const override;
  std::unique_ptr<MonotoneFn> clone() const override { return std::make_unique<LogitFn>(*this); }
};

class ExpFn final : public MonotoneFn {
 public:
  std::string_view type() const override { return "exp"; }
  double eval(double x) const override;
  double eval_inverse(double z) const override;
  double derivative(double x) const override;
  double log2_derivative(double x) const override;
  nlohmann::json to_json() const override;
  std::unique_ptr<MonotoneFn> clone() const override { return std::make_unique<ExpFn>(*this); }
};

// CDF of the logistic distribution; its derivative is the logistic density.
class LogisticCdfFn final : public MonotoneFn {
 public:
  LogisticCdfFn(double loc, double scale);
  std::string_view type() const override { return "logistic_cdf"; }
  double eval(double x) const override;
  double eval_inverse(double z) const override;
  double derivative(double x) const override;
  double log2_derivative(double x) const override;
  nlohmann::json to_json() const override;
  std::unique_ptr<MonotoneFn> clone() const override { return std::make_unique<LogisticCdfFn>(*this); }

  double loc() const { return loc_; }
  double scale() const { return scale_; }

 private:
  double loc_, scale_;
};

// log2 of the logistic(loc, scale) density, stable in the tails.
double logistic_log2_density(double x, double loc, double scale);

// Canonical text form of doubles in model files: C99 hex-float strings.
nlohmann::json encode_double(double v);
double decode_double(const nlohmann::json& j);

}  // namespace iflow
