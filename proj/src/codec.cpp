// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/codec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "iflow/errors.hpp"

namespace iflow {

using json = nlohmann::json;

double CodelengthReport::bits_per_dim() const {
  const double n = static_cast<double>(samples) * static_cast<double>(dims_per_sample);
  return n > 0 ? net_bits / n : 0.0;
}

double CodelengthReport::aux_bits_per_dim() const {
  return dims_per_sample > 0 ? aux_bits_required / static_cast<double>(dims_per_sample) : 0.0;
}

void CodelengthReport::merge(const CodelengthReport& o) {
  if (layer_bits.size() < o.layer_bits.size()) {
    layer_bits.resize(o.layer_bits.size(), 0.0);
    layer_kinds = o.layer_kinds;
  }
  for (size_t i = 0; i < o.layer_bits.size(); ++i) layer_bits[i] += o.layer_bits[i];
  samples += o.samples;
  if (dims_per_sample == 0) dims_per_sample = o.dims_per_sample;
  prior_bits += o.prior_bits;
  dequant_bits += o.dequant_bits;
  total_bits += o.total_bits;
  net_bits += o.net_bits;
  aux_bits_required = std::max(aux_bits_required, o.aux_bits_required);
  payload_bits += o.payload_bits;
  inference_seconds += o.inference_seconds;
  coding_seconds += o.coding_seconds;
}

json CodelengthReport::to_json() const {
  json layers = json::array();
  for (size_t i = 0; i < layer_bits.size(); ++i) {
    layers.push_back({{"index", i}, {"kind", i < layer_kinds.size() ? layer_kinds[i] : ""}, {"bits", layer_bits[i]}});
  }
  return {{"schema", "iflow-codelength-report"},
          {"schema_version", 1},
          {"samples", samples},
          {"dims_per_sample", dims_per_sample},
          {"layers", layers},
          {"prior_bits", prior_bits},
          {"dequant_bits", dequant_bits},
          {"total_bits", total_bits},
          {"net_bits", net_bits},
          {"bits_per_dim", bits_per_dim()},
          {"aux_bits_required", aux_bits_required},
          {"aux_bits_per_dim", aux_bits_per_dim()},
          {"payload_bits", payload_bits},
          {"inference_seconds", inference_seconds},
          {"coding_seconds", coding_seconds}};
}

// ---------------------------------------------------------------------------

void DequantizerLatent::decode_latent(std::span<const int32_t> xo, std::span<int64_t> v, LayerContext& ctx) const {
  deq_.decode_noise(xo, v, ctx);
}

void DequantizerLatent::encode_latent(std::span<const int32_t> xo, std::span<const int64_t> v,
                                      LayerContext& ctx) const {
  thread_local std::vector<int32_t> check;
  check.resize(xo.size());
  deq_.encode_noise(v, check, ctx);
  if (!std::equal(check.begin(), check.end(), xo.begin())) {
    fail(ErrorCode::kCorruptStream, "dequantized latent disagrees with the decoded observation");
  }
}

void DequantizerLatent::decode_observation(std::span<int32_t> xo, std::span<const int64_t> v, LayerContext&) const {
  for (size_t i = 0; i < v.size(); ++i) {
    const int64_t base = v[i] >> k_;
    if (base < INT32_MIN || base > INT32_MAX) fail(ErrorCode::kCorruptStream, "decoded value out of range");
    xo[i] = static_cast<int32_t>(base);
  }
}

namespace {

void check_range(const FlowModel& model, std::span<const int32_t> xo) {
  if (xo.size() != model.dims()) {
    fail(ErrorCode::kParameter, "sample has " + std::to_string(xo.size()) + " values, model expects " +
                                    std::to_string(model.dims()));
  }
  for (int32_t v : xo) {
    if (v < model.range_lo() || v >= model.range_hi()) {
      fail(ErrorCode::kRange, "sample value " + std::to_string(v) + " outside the model data range [" +
                                  std::to_string(model.range_lo()) + ", " + std::to_string(model.range_hi()) + ")");
    }
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void encode_latent_sample(const FlowModel& model, const LatentCoder& latent, std::span<const int32_t> xo,
                          UbcsCoder& coder, CodelengthReport* report) {
  check_range(model, xo);
  const auto t0 = std::chrono::steady_clock::now();
  double coding = 0;
  LayerContext ctx{model.precision(), &coder, report ? &coding : nullptr};
  thread_local std::vector<int64_t> v;
  v.resize(xo.size());
  const double info0 = report ? coder.information_bits() : 0.0;
  latent.decode_latent(xo, v, ctx);
  latent.encode_observation(xo, v, ctx);
  const double info1 = report ? coder.information_bits() : 0.0;
  std::vector<double> layer_bits;
  model.forward(v, ctx, report ? &layer_bits : nullptr);
  const double info2 = report ? coder.information_bits() : 0.0;
  model.prior().encode(v, ctx);
  if (!report) return;
  const double info3 = coder.information_bits();
  CodelengthReport r;
  r.samples = 1;
  r.dims_per_sample = xo.size();
  for (const auto& l : model.layers()) r.layer_kinds.emplace_back(l->kind());
  r.layer_bits = layer_bits;
  r.prior_bits = info3 - info2;
  r.dequant_bits = info0 - info1;
  r.total_bits = info3 - info1;
  r.net_bits = info3 - info0;
  r.coding_seconds = coding;
  r.inference_seconds = seconds_since(t0) - coding;
  report->merge(r);
}

void decode_latent_sample(const FlowModel& model, const LatentCoder& latent, std::span<int32_t> xo,
                          UbcsCoder& coder, CodelengthReport* report) {
  if (xo.size() != model.dims()) fail(ErrorCode::kParameter, "output size does not match the model shape");
  const auto t0 = std::chrono::steady_clock::now();
  double coding = 0;
  LayerContext ctx{model.precision(), &coder, report ? &coding : nullptr};
  thread_local std::vector<int64_t> v;
  v.resize(xo.size());
  model.prior().decode(v, ctx);
  model.inverse(v, ctx);
  latent.decode_observation(xo, v, ctx);
  for (int32_t x : xo) {
    if (x < model.range_lo() || x >= model.range_hi()) fail(ErrorCode::kCorruptStream, "decoded value outside data range");
  }
  latent.encode_latent(xo, v, ctx);
  if (report) {
    CodelengthReport r;
    r.samples = 1;
    r.dims_per_sample = xo.size();
    r.coding_seconds = coding;
    r.inference_seconds = seconds_since(t0) - coding;
    report->merge(r);
  }
}

void encode_sample(const FlowModel& model, std::span<const int32_t> xo, UbcsCoder& coder, CodelengthReport* report) {
  const DequantizerLatent latent(model.dequantizer(), model.precision().k);
  encode_latent_sample(model, latent, xo, coder, report);
}

void decode_sample(const FlowModel& model, std::span<int32_t> xo, UbcsCoder& coder, CodelengthReport* report) {
  const DequantizerLatent latent(model.dequantizer(), model.precision().k);
  decode_latent_sample(model, latent, xo, coder, report);
}

// ---------------------------------------------------------------------------

uint32_t aux_fill_word(uint64_t seed, uint32_t lane, uint64_t index, int K) {
  // splitmix64 finalizer over a counter; lanes get disjoint sequences.
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1) + 0xD1B54A32D192ED03ULL * (uint64_t{lane} + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return K == 32 ? static_cast<uint32_t>(z) : static_cast<uint32_t>(z & ((uint64_t{1} << K) - 1));
}

namespace {

constexpr int kCoderM = 4;

UbcsCoder filled_coder(uint64_t seed, uint32_t lane, size_t words, int K) {
  UbcsCoder coder(K, kCoderM);
  std::vector<uint32_t> stack(words);
  for (size_t p = 0; p < words; ++p) stack[p] = aux_fill_word(seed, lane, words - 1 - p, K);
  coder.restore(uint64_t{1} << kCoderM, std::move(stack));
  return coder;
}

template <typename Fn>
void for_each_lane(size_t lanes, int threads, Fn&& fn) {
  const size_t workers = std::max<size_t>(1, std::min<size_t>(lanes, static_cast<size_t>(std::max(1, threads))));
  if (workers == 1) {
    for (size_t l = 0; l < lanes; ++l) fn(l);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (size_t l = w; l < lanes; l += workers) fn(l);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

size_t estimate_fill_words(const FlowModel& model) {
  const Precision& p = model.precision();
  // Noise costs about k bits per dimension (more for a flow dequantizer, whose
  // first MSTs decode before anything is encoded); add slack for one MST group.
  const double per_dim = p.k + 3.0 * std::log2(static_cast<double>(p.S)) + 8.0;
  return static_cast<size_t>(std::ceil(per_dim * static_cast<double>(model.dims()) / model.coder_bits())) + 16;
}

}  // namespace

Container compress(const FlowModel& model, std::span<const Sample> samples, const CodecOptions& options,
                   CodelengthReport* report) {
  if (options.lanes < 1) fail(ErrorCode::kParameter, "at least one lane is required");
  for (const auto& s : samples) check_range(model, s);
  const int K = model.coder_bits();
  const size_t lanes = static_cast<size_t>(options.lanes);

  Container c;
  c.model_hash = model.content_hash_bytes();
  c.precision = model.precision();
  c.K = K;
  c.M = kCoderM;
  c.shape = model.shape();
  c.samples = samples.size();
  c.range_lo = model.range_lo();
  c.range_hi = model.range_hi();
  c.seed = options.seed;
  c.metadata = options.metadata;
  c.lanes.resize(lanes);
  std::vector<CodelengthReport> reports(lanes);

  for_each_lane(lanes, options.threads, [&](size_t lane) {
    size_t fill = options.initial_fill_words ? options.initial_fill_words : estimate_fill_words(model);
    while (true) {
      UbcsCoder coder = filled_coder(options.seed, static_cast<uint32_t>(lane), fill, K);
      CodelengthReport r;
      try {
        uint64_t count = 0;
        for (size_t i = lane; i < samples.size(); i += lanes) {
          encode_sample(model, samples[i], coder, report ? &r : nullptr);
          ++count;
        }
        LanePayload& out = c.lanes[lane];
        const size_t low = coder.low_water();
        out.consumed_fill_words = fill - low;
        out.samples = count;
        out.words.assign(coder.words().begin() + static_cast<ptrdiff_t>(low), coder.words().end());
        out.state = coder.state();
        r.aux_bits_required = static_cast<double>(out.consumed_fill_words) * K;
        r.payload_bits = static_cast<double>(out.words.size()) * K + std::log2(static_cast<double>(out.state));
        reports[lane] = std::move(r);
        return;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kAuxUnderflow) throw;
        if (options.initial_fill_words) {
          fail(ErrorCode::kInsufficientAuxBits,
               "initial auxiliary fill of " + std::to_string(fill) + " words is too small");
        }
        fill *= 2;
      }
    }
  });
  if (report) {
    for (auto& r : reports) {
      r.dims_per_sample = model.dims();
      report->merge(r);
    }
  }
  return c;
}

std::vector<Sample> decompress(const FlowModel& model, const Container& c, int threads, CodelengthReport* report) {
  if (c.model_hash != model.content_hash_bytes()) {
    fail(ErrorCode::kHashMismatch, "container was written with a different model (hash " +
                                       to_hex(c.model_hash) + ", model " + model.content_hash() + ")");
  }
  if (c.precision != model.precision() || c.K != model.coder_bits() || c.M != kCoderM || c.shape != model.shape() ||
      c.range_lo != model.range_lo() || c.range_hi != model.range_hi()) {
    fail(ErrorCode::kCorruptStream, "container header disagrees with the model");
  }
  const size_t lanes = c.lanes.size();
  std::vector<Sample> out(c.samples, Sample(model.dims()));
  std::vector<CodelengthReport> reports(lanes);
  for_each_lane(lanes, threads, [&](size_t lane) {
    const LanePayload& p = c.lanes[lane];
    const uint64_t expected = lane < c.samples ? (c.samples - lane + lanes - 1) / lanes : 0;
    if (p.samples != expected) fail(ErrorCode::kCorruptStream, "lane sample count mismatch");
    UbcsCoder coder(c.K, c.M);
    coder.restore(p.state, p.words);
    try {
      std::vector<size_t> order;
      for (size_t i = lane; i < c.samples; i += lanes) order.push_back(i);
      for (size_t j = order.size(); j-- > 0;) {
        decode_sample(model, out[order[j]], coder, report ? &reports[lane] : nullptr);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kAuxUnderflow || e.code() == ErrorCode::kDomain ||
          e.code() == ErrorCode::kCompressionFailure || e.code() == ErrorCode::kDegenerateScale ||
          e.code() == ErrorCode::kRange) {
        fail(ErrorCode::kCorruptStream, std::string("stream is inconsistent: ") + e.what());
      }
      throw;
    }
    // The stream must unwind to exactly the auxiliary fill the encoder consumed.
    bool ok = coder.state() == (uint64_t{1} << c.M) && coder.size_words() == p.consumed_fill_words;
    for (size_t q = 0; ok && q < coder.size_words(); ++q) {
      ok = coder.words()[q] == aux_fill_word(c.seed, static_cast<uint32_t>(lane), p.consumed_fill_words - 1 - q, c.K);
    }
    if (!ok) fail(ErrorCode::kCorruptStream, "stream did not unwind to the auxiliary fill");
  });
  if (report) {
    for (auto& r : reports) report->merge(r);
  }
  return out;
}

double expected_codelength_bpd(const FlowModel& model, std::span<const Sample> xo,
                               std::span<const std::vector<double>> u) {
  if (xo.size() != u.size() || xo.empty()) fail(ErrorCode::kParameter, "need matching non-empty samples");
  double total = 0;
  std::vector<double> x(model.dims());
  for (size_t s = 0; s < xo.size(); ++s) {
    for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(xo[s][i]) + u[s][i];
    total += model.dequantizer().log2_q(xo[s], u[s]) - model.log2_density(x);
  }
  return total / (static_cast<double>(xo.size()) * static_cast<double>(model.dims()));
}

double measure_aux_bits(const FlowModel& model, std::span<const int32_t> xo, uint64_t seed) {
  CodecOptions opt;
  opt.seed = seed;
  CodelengthReport r;
  const Sample s(xo.begin(), xo.end());
  compress(model, std::span<const Sample>(&s, 1), opt, &r);
  return r.aux_bits_per_dim();
}

}  // namespace iflow
