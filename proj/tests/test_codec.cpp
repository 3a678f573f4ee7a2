// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "iflow/codec.hpp"
#include "iflow/container.hpp"
#include "iflow/errors.hpp"
#include "iflow/model.hpp"

using namespace iflow;
using nlohmann::json;

namespace {

FlowModel random_model(uint64_t seed, int layers = 4, bool flow_deq = false, TensorShape shape = {3, 4, 4}) {
  RandomModelOptions opt;
  opt.shape = shape;
  opt.layers = layers;
  opt.flow_dequantizer = flow_deq;
  return FlowModel::from_json(random_model_description(opt, seed));
}

std::vector<Sample> random_samples(uint64_t seed, size_t n, size_t d, int lo = 0, int hi = 255) {
  std::mt19937_64 rng(seed);
  // Smooth-ish data: a per-sample base value plus small noise.
  std::vector<Sample> out(n, Sample(d));
  for (auto& s : out) {
    const int base = std::uniform_int_distribution<int>(lo + 20, hi - 20)(rng);
    for (auto& v : s) v = std::clamp(base + std::uniform_int_distribution<int>(-20, 20)(rng), lo, hi);
  }
  return out;
}

UbcsCoder filled(uint64_t seed, int words) {
  std::mt19937_64 rng(seed);
  UbcsCoder aux;
  for (int i = 0; i < words; ++i) aux.push_word(static_cast<uint32_t>(rng()));
  return aux;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIo;
}

// Synthetic latent model: v is uniform noise on [0, 1) independent of the
// data, and each binary observation is coded with a two-symbol coder whose
// labelling depends on v.
class BinaryLatent final : public LatentCoder {
 public:
  explicit BinaryLatent(int k) : k_(k) {}
  void decode_latent(std::span<const int32_t>, std::span<int64_t> v, LayerContext& ctx) const override {
    for (auto& x : v) x = static_cast<int64_t>(ctx.aux->decode_bits(k_));
  }
  void encode_latent(std::span<const int32_t>, std::span<const int64_t> v, LayerContext& ctx) const override {
    for (size_t i = v.size(); i-- > 0;) ctx.aux->encode_bits(static_cast<uint64_t>(v[i]), k_);
  }
  void encode_observation(std::span<const int32_t> xo, std::span<const int64_t> v,
                          LayerContext& ctx) const override {
    for (size_t i = 0; i < xo.size(); ++i) ctx.aux->encode(static_cast<uint32_t>(xo[i]) ^ flip(v[i]), 2);
  }
  void decode_observation(std::span<int32_t> xo, std::span<const int64_t> v, LayerContext& ctx) const override {
    for (size_t i = xo.size(); i-- > 0;) xo[i] = static_cast<int32_t>(ctx.aux->decode(2) ^ flip(v[i]));
  }

 private:
  uint32_t flip(int64_t v) const { return static_cast<uint32_t>(v >> (k_ - 1)) & 1; }
  int k_;
};

}  // namespace

TEST_CASE("identity model with uniform components costs exactly the raw bits") {
  json j = {{"format", "iflow-model"},
            {"version", 1},
            {"shape", {1, 1, 8}},
            {"data_range", {0, 256}},
            {"precision", {{"k", 28}, {"h", 12}, {"S", 65536}, {"b", 4}}},
            {"prior", {{"kind", "uniform"}, {"low", 0}, {"high", 256}}},
            {"dequantizer", {{"kind", "uniform"}}},
            {"layers", json::array()}};
  const auto m = FlowModel::from_json(j);
  const auto samples = random_samples(1, 200, 8);
  CodelengthReport r;
  const auto c = compress(m, samples, {}, &r);
  CHECK(r.bits_per_dim() == doctest::Approx(8.0).epsilon(1e-4));
  CHECK(r.aux_bits_per_dim() == doctest::Approx(28.0).epsilon(0.2));
  CHECK(decompress(m, c) == samples);
}

TEST_CASE("single samples round trip and restore the stream") {
  const auto m = random_model(3, 5, true);
  const auto samples = random_samples(2, 100, m.dims());
  for (const auto& s : samples) {
    auto coder = filled(4, 400);
    const UbcsCoder before = coder;
    encode_sample(m, s, coder);
    Sample back(m.dims());
    decode_sample(m, back, coder);
    REQUIRE(back == s);
    REQUIRE(coder == before);
  }
  // A one-pixel image.
  const auto tiny = random_model(5, 3, false, {1, 1, 1});
  const std::vector<Sample> one{{77}};
  CHECK(decompress(tiny, compress(tiny, one, {})) == one);
}

TEST_CASE("flow dequantizer re-encodes whatever noise the stream yields") {
  // Stream contents are arbitrary on the encoder side, including extreme
  // words that drive the noise into the tails of its distribution.
  for (int k : {22, 26, 28, 32}) {
    RandomModelOptions opt;
    opt.precision.k = k;
    opt.precision.h = std::min(12, k - 2);
    opt.flow_dequantizer = true;
    const auto m = FlowModel::from_json(random_model_description(opt, 40 + k));
    const Sample s = random_samples(k, 1, m.dims())[0];
    std::mt19937_64 rng(k);
    for (int trial = 0; trial < 300; ++trial) {
      UbcsCoder coder;
      for (int i = 0; i < 300; ++i) {
        const uint32_t extremes[] = {0u, 1u, 0xffffffffu, 0x80000000u, static_cast<uint32_t>(rng())};
        coder.push_word(extremes[(trial + i) % 5 == 4 ? 4 : rng() % 5]);
      }
      const UbcsCoder before = coder;
      LayerContext ctx{m.precision(), &coder, nullptr};
      std::vector<int64_t> x_hat(m.dims());
      m.dequantizer().decode_noise(s, x_hat, ctx);
      Sample back(m.dims());
      m.dequantizer().encode_noise(x_hat, back, ctx);
      REQUIRE(back == s);
      REQUIRE(coder == before);
    }
  }
}

TEST_CASE("samples come back in reverse order from one stream") {
  const auto m = random_model(6, 4);
  const auto samples = random_samples(3, 64, m.dims());
  auto coder = filled(1, 4000);
  const UbcsCoder before = coder;
  for (const auto& s : samples) encode_sample(m, s, coder);
  std::vector<Sample> decoded;
  for (size_t i = 0; i < samples.size(); ++i) {
    Sample s(m.dims());
    decode_sample(m, s, coder);
    decoded.push_back(s);
  }
  for (size_t i = 0; i < samples.size(); ++i) REQUIRE(decoded[i] == samples[samples.size() - 1 - i]);
  CHECK(coder == before);
}

TEST_CASE("generic latent pipeline reduces to the dequantizer pipeline") {
  const auto m = random_model(8, 4, true);
  const auto samples = random_samples(4, 20, m.dims());
  const DequantizerLatent latent(m.dequantizer(), m.precision().k);
  auto a = filled(2, 600), b = a;
  for (const auto& s : samples) {
    encode_sample(m, s, a);
    encode_latent_sample(m, latent, s, b);
  }
  CHECK(a == b);
  for (size_t i = samples.size(); i-- > 0;) {
    Sample s(m.dims());
    decode_latent_sample(m, latent, s, b);
    REQUIRE(s == samples[i]);
  }
}

TEST_CASE("generic latent pipeline with a two-symbol observation coder") {
  RandomModelOptions opt;
  opt.shape = {2, 2, 2};
  opt.range_hi = 2;
  const auto m = FlowModel::from_json(random_model_description(opt, 21));
  const BinaryLatent latent(m.precision().k);
  std::mt19937_64 rng(3);
  std::vector<Sample> samples(200, Sample(m.dims()));
  for (auto& s : samples) {
    for (auto& v : s) v = static_cast<int32_t>(rng() & 1);
  }
  auto coder = filled(6, 600);
  const UbcsCoder before = coder;
  for (const auto& s : samples) encode_latent_sample(m, latent, s, coder);
  for (size_t i = samples.size(); i-- > 0;) {
    Sample s(m.dims());
    decode_latent_sample(m, latent, s, coder);
    REQUIRE(s == samples[i]);
  }
  CHECK(coder == before);
}

TEST_CASE("container round trip across lanes and threads") {
  const auto m = random_model(9, 5);
  const auto samples = random_samples(5, 37, m.dims());
  for (int lanes : {1, 2, 5}) {
    CodecOptions opt;
    opt.lanes = lanes;
    opt.threads = lanes;
    opt.metadata = {1, 2, 3};
    CodelengthReport r;
    const auto c = compress(m, samples, opt, &r);
    const auto bytes = c.serialize();
    const auto parsed = Container::parse(bytes);
    CHECK(parsed.metadata == opt.metadata);
    CHECK(parsed.serialize() == bytes);
    CHECK(decompress(m, parsed, 2) == samples);
    // Payload reconciles exactly with the reported net bits.
    double consumed = 0;
    for (const auto& lane : c.lanes) consumed += static_cast<double>(lane.consumed_fill_words);
    CHECK(c.payload_bits() ==
          doctest::Approx(r.net_bits + m.coder_bits() * consumed + 4.0 * lanes).epsilon(1e-12));
    CHECK(r.payload_bits == doctest::Approx(c.payload_bits()).epsilon(1e-12));
    CHECK(r.total_bits == doctest::Approx(r.prior_bits + [&] {
            double s = 0;
            for (double b : r.layer_bits) s += b;
            return s;
          }()));
  }
}

TEST_CASE("payload does not depend on the initial fill size") {
  const auto m = random_model(10, 4);
  const auto samples = random_samples(6, 10, m.dims());
  CodecOptions a, b;
  b.initial_fill_words = 50000;
  const auto ca = compress(m, samples, a), cb = compress(m, samples, b);
  CHECK(ca.lanes[0].words == cb.lanes[0].words);
  CHECK(ca.lanes[0].state == cb.lanes[0].state);
  CHECK(ca.lanes[0].consumed_fill_words == cb.lanes[0].consumed_fill_words);
  // Same seed, same container bytes.
  CHECK(compress(m, samples, a).serialize() == ca.serialize());
  CodecOptions small;
  small.initial_fill_words = 3;
  CHECK(code_of([&] { compress(m, samples, small); }) == ErrorCode::kInsufficientAuxBits);
}

TEST_CASE("damaged containers are detected") {
  const auto m = random_model(11, 4);
  const auto samples = random_samples(7, 6, m.dims());
  const auto bytes = compress(m, samples, {}).serialize();
  for (size_t cut = 0; cut < bytes.size(); cut += 1 + cut / 8) {
    const std::vector<uint8_t> part(bytes.begin(), bytes.begin() + static_cast<ptrdiff_t>(cut));
    CHECK(code_of([&] { decompress(m, Container::parse(part)); }) == ErrorCode::kCorruptStream);
  }
  std::mt19937_64 rng(1);
  int detected = 0;
  for (int i = 0; i < 300; ++i) {
    auto bad = bytes;
    bad[rng() % bad.size()] ^= static_cast<uint8_t>(1u << (rng() % 8));
    try {
      const auto out = decompress(m, Container::parse(bad));
      REQUIRE(out == samples);  // a flip in an unused field may be harmless, never silently wrong
    } catch (const Error&) {
      ++detected;
    }
  }
  CHECK(detected > 250);
  const auto other = random_model(12, 4);
  CHECK(code_of([&] { decompress(other, Container::parse(bytes)); }) == ErrorCode::kHashMismatch);
  auto versioned = bytes;
  versioned[4] = 9;
  CHECK(code_of([&] { Container::parse(versioned); }) == ErrorCode::kVersion);
}

TEST_CASE("out-of-range samples are rejected") {
  const auto m = random_model(13, 3);
  std::vector<Sample> bad{Sample(m.dims(), 0)};
  bad[0][3] = 256;
  CHECK(code_of([&] { compress(m, bad, {}); }) == ErrorCode::kRange);
  bad[0][3] = -1;
  CHECK(code_of([&] { compress(m, bad, {}); }) == ErrorCode::kRange);
  std::vector<Sample> short_sample{Sample(3, 0)};
  CHECK(code_of([&] { compress(m, short_sample, {}); }) == ErrorCode::kParameter);
}

TEST_CASE("net codelength matches the dequantization bound") {
  for (bool flow : {false, true}) {
    const auto m = random_model(14, 4, flow, {3, 2, 2});
    const auto samples = random_samples(8, 1500, m.dims());
    auto coder = filled(5, 200);
    double net = 0, bound = 0;
    std::vector<int64_t> x_hat(m.dims());
    std::vector<double> x(m.dims()), u(m.dims());
    for (const auto& s : samples) {
      // The noise is the first thing the encoder decodes; replay it on a copy.
      UbcsCoder peek = coder;
      LayerContext ctx{m.precision(), &peek, nullptr};
      m.dequantizer().decode_noise(s, x_hat, ctx);
      for (size_t i = 0; i < x.size(); ++i) {
        u[i] = mantissa_to_double(x_hat[i] - (int64_t{s[i]} << m.precision().k), m.precision().k);
        x[i] = s[i] + u[i];
      }
      bound += m.dequantizer().log2_q(s, u) - m.log2_density(x);
      CodelengthReport r;
      encode_sample(m, s, coder, &r);
      net += r.net_bits;
    }
    const double d = static_cast<double>(samples.size() * m.dims());
    CAPTURE(flow);
    CHECK(std::fabs(net / d - bound / d) < 0.01);
  }
}

TEST_CASE("report json schema") {
  const auto m = random_model(15, 3);
  CodelengthReport r;
  compress(m, random_samples(9, 3, m.dims()), {}, &r);
  const auto j = r.to_json();
  CHECK(j.at("schema") == "iflow-codelength-report");
  CHECK(j.at("schema_version") == 1);
  for (const char* key : {"samples", "dims_per_sample", "layers", "prior_bits", "dequant_bits", "total_bits",
                          "net_bits", "bits_per_dim", "aux_bits_required", "aux_bits_per_dim", "payload_bits",
                          "inference_seconds", "coding_seconds"}) {
    CHECK(j.contains(key));
  }
  CHECK(j.at("layers").size() == 3);
  CHECK(aux_fill_word(1, 0, 5, 32) == aux_fill_word(1, 0, 5, 32));
  CHECK(aux_fill_word(1, 0, 5, 32) != aux_fill_word(1, 1, 5, 32));
  CHECK(aux_fill_word(1, 0, 5, 12) < 4096u);
}
