// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Lossless coding of integer data with a flow model and bits-back
// dequantization.
//
// Encoding a sample x°:   decode u from the stream, x = x° + u,
//                         z = f(x) layer by layer, encode z with the prior.
// Decoding reverses every step, so samples come back in LIFO order.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iflow/container.hpp"
#include "iflow/model.hpp"

namespace iflow {

using Sample = std::vector<int32_t>;

struct CodelengthReport {
  size_t samples = 0;
  size_t dims_per_sample = 0;
  std::vector<std::string> layer_kinds;
  std::vector<double> layer_bits;  // stream growth per layer, summed over samples
  double prior_bits = 0;           // stream growth from coding z
  double dequant_bits = 0;         // stream shrinkage from decoding u (bits back)
  double total_bits = 0;           // layers + prior
  double net_bits = 0;             // total - dequant
  double aux_bits_required = 0;    // auxiliary bits consumed (largest lane)
  double payload_bits = 0;         // words * K + log2(final state) over lanes
  double inference_seconds = 0;
  double coding_seconds = 0;

  double bits_per_dim() const;
  double aux_bits_per_dim() const;
  void merge(const CodelengthReport& other);
  nlohmann::json to_json() const;
};

// Single-sample coding on one stream. encode_sample needs enough bits on the
// stream for the noise; otherwise kAuxUnderflow propagates.
void encode_sample(const FlowModel& model, std::span<const int32_t> xo, UbcsCoder& coder,
                   CodelengthReport* report = nullptr);
void decode_sample(const FlowModel& model, std::span<int32_t> xo, UbcsCoder& coder,
                   CodelengthReport* report = nullptr);

// Latent-variable pipeline: a latent v is decoded with q(v | x°), x° is
// encoded with P(x° | v), and the flow maps v to z for the prior. With
// P = 1 and v = x° + u it is exactly encode_sample.
class LatentCoder {
 public:
  virtual ~LatentCoder() = default;
  virtual void decode_latent(std::span<const int32_t> xo, std::span<int64_t> v, LayerContext& ctx) const = 0;
  virtual void encode_latent(std::span<const int32_t> xo, std::span<const int64_t> v,
                             LayerContext& ctx) const = 0;
  virtual void encode_observation(std::span<const int32_t> xo, std::span<const int64_t> v,
                                  LayerContext& ctx) const = 0;
  virtual void decode_observation(std::span<int32_t> xo, std::span<const int64_t> v,
                                  LayerContext& ctx) const = 0;
};

// Adapter presenting a model's dequantizer as a latent coder (P = 1).
class DequantizerLatent final : public LatentCoder {
 public:
  DequantizerLatent(const Dequantizer& deq, int k) : deq_(deq), k_(k) {}
  void decode_latent(std::span<const int32_t> xo, std::span<int64_t> v, LayerContext& ctx) const override;
  void encode_latent(std::span<const int32_t> xo, std::span<const int64_t> v, LayerContext& ctx) const override;
  void encode_observation(std::span<const int32_t>, std::span<const int64_t>, LayerContext&) const override {}
  void decode_observation(std::span<int32_t> xo, std::span<const int64_t> v, LayerContext& ctx) const override;

 private:
  const Dequantizer& deq_;
  int k_;
};

void encode_latent_sample(const FlowModel& model, const LatentCoder& latent, std::span<const int32_t> xo,
                          UbcsCoder& coder, CodelengthReport* report = nullptr);
void decode_latent_sample(const FlowModel& model, const LatentCoder& latent, std::span<int32_t> xo,
                          UbcsCoder& coder, CodelengthReport* report = nullptr);

struct CodecOptions {
  uint64_t seed = 0x1f10c0de5eedULL;
  int lanes = 1;          // independent streams
  int threads = 1;        // worker threads (at most one per lane)
  size_t initial_fill_words = 0;  // 0 = estimate from the model and grow on demand
  std::vector<uint8_t> metadata;
};

// Deterministic auxiliary fill for one lane: word i of the fill is the i-th
// word consumed by the encoder.
uint32_t aux_fill_word(uint64_t seed, uint32_t lane, uint64_t index, int K);

Container compress(const FlowModel& model, std::span<const Sample> samples, const CodecOptions& options,
                   CodelengthReport* report = nullptr);
std::vector<Sample> decompress(const FlowModel& model, const Container& container, int threads = 1,
                               CodelengthReport* report = nullptr);

// Monte-Carlo estimate (over the given dequantized points) of the expected
// codelength in bits per dimension: mean of [log2 q(u|x°) - log2 p(x° + u)] / d.
double expected_codelength_bpd(const FlowModel& model, std::span<const Sample> xo,
                               std::span<const std::vector<double>> u);

// Auxiliary bits per dimension consumed to compress a single sample.
double measure_aux_bits(const FlowModel& model, std::span<const int32_t> xo, uint64_t seed = 1);

}  // namespace iflow
