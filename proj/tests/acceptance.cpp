// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Each criterion prints one line
//   criterion N: PASS|FAIL <measurements>
// and the process exits non-zero if any selected criterion fails.
// Usage: iflow_acceptance [--only N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "iflow/bench.hpp"
#include "iflow/codec.hpp"
#include "iflow/elementwise.hpp"
#include "iflow/errors.hpp"
#include "iflow/fixture.hpp"
#include "iflow/layers.hpp"
#include "iflow/linalg.hpp"
#include "iflow/model.hpp"
#include "iflow/monotone.hpp"
#include "iflow/mst.hpp"
#include "iflow/ubcs.hpp"

using namespace iflow;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string format(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

UbcsCoder filled(uint64_t seed, int words) {
  std::mt19937_64 rng(seed);
  UbcsCoder aux;
  for (int i = 0; i < words; ++i) aux.push_word(static_cast<uint32_t>(rng()));
  return aux;
}

std::vector<Sample> smooth_samples(uint64_t seed, size_t n, size_t d, int hi) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out(n, Sample(d));
  const int spread = std::max(1, hi / 12);
  for (auto& s : out) {
    const int base = std::uniform_int_distribution<int>(0, hi - 1)(rng);
    for (auto& v : s) v = std::clamp(base + std::uniform_int_distribution<int>(-spread, spread)(rng), 0, hi - 1);
  }
  return out;
}

// 1. Encode then decode is the identity on data and auxiliary stream.
Outcome master_bijection() {
  const TensorShape shapes[] = {{3, 4, 4}, {1, 5, 3}, {2, 3, 3}, {4, 2, 2}, {3, 1, 7}};
  size_t inputs = 0, failures = 0, containers = 0;
  for (int config = 0; config < 20; ++config) {
    RandomModelOptions opt;
    opt.shape = shapes[config % 5];
    opt.layers = 6 + config % 4;
    opt.flow_dequantizer = config % 2 == 1;
    opt.uniform_prior = config % 5 == 3;
    opt.precision.b = 1 + config % 4;
    opt.precision.k = 24 + (config % 3) * 2;
    opt.precision.h = 8 + config % 5;
    const FlowModel m = FlowModel::from_json(random_model_description(opt, 1000 + config));
    const auto samples = smooth_samples(config, 500, m.dims(), 256);
    auto coder = filled(config, 4096);
    for (const auto& s : samples) {
      const UbcsCoder before = coder;
      encode_sample(m, s, coder);
      Sample back(m.dims());
      decode_sample(m, back, coder);
      if (back != s || !(coder == before)) ++failures;
      ++inputs;
    }
    // The same samples through the multi-lane container path.
    CodecOptions copt;
    copt.lanes = 1 + config % 3;
    copt.seed = config;
    if (decompress(m, Container::parse(compress(m, samples, copt).serialize())) != samples) ++failures;
    ++containers;
  }
  return {failures == 0 && inputs >= 10000,
          format("%zu inputs, %zu containers, 20 configurations, %zu failures", inputs, containers, failures)};
}

// 2. Round trip of every symbol sequence on a tiny coder, plus a long run.
struct TinyDfs {
  UbcsCoder coder{3, 2};
  std::vector<UbcsCoder> snapshot;
  uint64_t sequences = 0, failures = 0;

  void visit(int depth, int max_depth) {
    ++sequences;
    if (depth == max_depth) return;
    snapshot[depth] = coder;
    for (uint32_t R = 1; R < 8; ++R) {
      for (uint32_t s = 0; s < R; ++s) {
        coder.encode(s, R);
        if (coder.state() < 4 || coder.state() >= 32) ++failures;
        visit(depth + 1, max_depth);
        if (coder.decode(R) != s || !(coder == snapshot[depth])) {
          ++failures;
          coder = snapshot[depth];
        }
      }
    }
  }
};

Outcome ubcs_round_trip() {
  TinyDfs dfs;
  dfs.snapshot.resize(6);
  dfs.visit(0, 6);
  std::mt19937_64 rng(2);
  const size_t n = 1'000'000;
  std::vector<uint32_t> sym(n), range(n);
  UbcsCoder coder;
  const UbcsCoder initial = coder;
  for (size_t i = 0; i < n; ++i) {
    const int bits = 1 + static_cast<int>(rng() % 32);
    range[i] = static_cast<uint32_t>(std::max<uint64_t>(1, (rng() & ((uint64_t{1} << bits) - 1)) & 0xffffffffu));
    sym[i] = static_cast<uint32_t>(rng() % range[i]);
    coder.encode(sym[i], range[i]);
  }
  uint64_t bad = 0;
  for (size_t i = n; i-- > 0;) bad += coder.decode(range[i]) != sym[i];
  const bool restored = coder == initial;
  return {dfs.failures == 0 && bad == 0 && restored,
          format("K=3 M=2: %llu sequences (length <= 6, R < 8), %llu failures; K=32 M=4: %zu symbols, %llu "
                 "mismatches, state %s",
                 static_cast<unsigned long long>(dfs.sequences), static_cast<unsigned long long>(dfs.failures), n,
                 static_cast<unsigned long long>(bad), restored ? "restored" : "differs")};
}

// 3. Codelength bound and the information floor.
Outcome ubcs_codelength() {
  const int K = 32, M = 4;
  const double ln2 = std::log(2.0);
  const double eps = 1 / (ln2 * (1 << M) * K);
  std::mt19937_64 rng(3);
  int violations = 0, floor_violations = 0;
  double worst_ratio = 0, worst_floor = 1e300;
  for (int seq = 0; seq < 1000; ++seq) {
    UbcsCoder coder(K, M);
    const double l0 = static_cast<double>(coder.codelength_bits());
    double sum = 0;
    const int len = 1 + static_cast<int>(rng() % 2000);
    const int max_bits = 1 + seq % 31;
    for (int i = 0; i < len; ++i) {
      const uint64_t R = 1 + rng() % ((uint64_t{1} << max_bits) - 1);
      coder.encode(static_cast<uint32_t>(rng() % R), static_cast<uint32_t>(R));
      sum += std::log2(static_cast<double>(R));
    }
    const double grown = static_cast<double>(coder.codelength_bits()) - l0;
    const double bound = (sum + 1 + 1 / (ln2 * (1 << M))) / (1 - eps);
    if (grown > bound) ++violations;
    if (grown < sum - 1) ++floor_violations;
    worst_ratio = std::max(worst_ratio, grown / bound);
    worst_floor = std::min(worst_floor, grown - sum);
  }
  return {violations == 0 && floor_violations == 0,
          format("1000 sequences: bound violations %d (max l/bound %.5f), floor violations %d (min l - sum log2 R "
                 "%.3f)",
                 violations, worst_ratio, floor_violations, worst_floor)};
}

// 4. MST bijection on a small grid and the per-call stream growth.
Outcome mst_properties() {
  uint64_t checked = 0, failures = 0;
  for (uint32_t S = 1; S <= 64; ++S) {
    for (uint32_t R = 1; R <= 64; ++R) {
      const RationalScale sc{R, S};
      for (int64_t x = -1024; x < 1024; ++x) {
        for (uint32_t r = 0; r < R; ++r) {
          const MstPair f = mst_forward_kernel(x, r, sc);
          const MstPair g = mst_inverse_kernel(f.value, f.residue, sc);
          if (f.residue >= S || g.value != x || g.residue != r) ++failures;
          ++checked;
        }
      }
    }
  }
  // Growth per call versus log2 S - log2 R, with the coder's per-symbol slack.
  const int K = 32, M = 4;
  const double eps = 1 / (std::log(2.0) * (1 << M) * K);
  double worst = 0;
  int growth_failures = 0;
  std::mt19937_64 rng(4);
  const int calls = 4000;
  for (uint32_t S = 1; S <= 64; S += 3) {
    for (uint32_t R = 1; R <= 64; R += 3) {
      auto aux = filled(R * 131 + S, 2 * calls);
      const RationalScale sc{R, S};
      const double b0 = aux.information_bits();
      for (int i = 0; i < calls; ++i) mst_forward(static_cast<int64_t>(rng() % 2048) - 1024, sc, aux);
      const double per_call = (aux.information_bits() - b0) / calls;
      const double ideal = std::log2(S) - std::log2(R);
      const double slack = (std::log2(S) + std::log2(R)) * eps / (1 - eps) + 2.0 / calls;
      const double dev = std::fabs(per_call - ideal);
      worst = std::max(worst, dev);
      if (dev > slack) ++growth_failures;
    }
  }
  return {failures == 0 && growth_failures == 0,
          format("%llu (x, r_d, R, S) tuples, %llu failures; growth outside slack in %d of 484 (R, S) pairs (largest "
                 "deviation %.4f bits)",
                 static_cast<unsigned long long>(checked), static_cast<unsigned long long>(failures),
                 growth_failures, worst)};
}

// 5. Elementwise error bound.
Outcome elementwise_error() {
  const Precision p{28, 12, 65536, 1};
  struct Case {
    std::unique_ptr<MonotoneFn> fn;
    double lo, hi;
    double curvature;  // sup |f''| on [lo, hi)
  };
  // sigmoid'' peaks at 1/(6 sqrt 3); logit'' = (2x-1)/(x^2(1-x)^2) peaks at the
  // domain ends; exp'' = exp.
  const double e = 1.0 / 64;
  std::vector<Case> cases;
  cases.push_back({std::make_unique<SigmoidFn>(), -8, 8, 1 / (6 * std::sqrt(3.0))});
  cases.push_back({std::make_unique<LogitFn>(), e, 1 - e, (1 - 2 * e) / (e * e * (1 - e) * (1 - e))});
  cases.push_back({std::make_unique<ExpFn>(), -4, 4, std::exp(4.0)});
  std::string detail;
  bool pass = true;
  std::mt19937_64 rng(5);
  for (auto& cs : cases) {
    const std::unique_ptr<MonotoneFn> ref = cs.fn->clone();
    ElementwiseTransform t(std::move(cs.fn), p, IntervalStrategy::kUniformX, cs.lo, cs.hi);
    const double bound =
        10 * (1.0 / p.S + std::ldexp(1.0, -p.k) + cs.curvature * std::ldexp(1.0, -2 * p.h));
    auto aux = filled(6, 64);
    const int64_t xa = quantize_mantissa(cs.lo, p.k), xb = quantize_mantissa(cs.hi, p.k);
    const int64_t cell = int64_t{1} << (p.k - p.h);
    std::uniform_int_distribution<int64_t> pick(xa, xb - 1);
    double worst = 0;
    auto probe = [&](int64_t x) {
      const int64_t z = t.forward(x, aux);
      worst = std::max(worst, std::fabs(mantissa_to_double(z, p.k) - ref->eval(mantissa_to_double(x, p.k))));
      t.inverse(z, aux);
    };
    // Every cell at its midpoint, plus random points.
    for (int64_t x = xa; x < xb; x += cell) probe(std::min(x + cell / 2, xb - 1));
    for (int i = 0; i < 200000; ++i) probe(pick(rng));
    pass = pass && worst <= bound;
    detail += format("%s max err %.3g (bound %.3g); ", std::string(ref->type()).c_str(), worst, bound);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// 6. Measured codelength against the model's negative log-likelihood.
Outcome codelength_nll() {
  double worst = 0;
  std::string detail;
  for (int config = 0; config < 8; ++config) {
    RandomModelOptions opt;
    opt.layers = 3 + config % 4;
    opt.flow_dequantizer = config % 2 == 1;
    const FlowModel m = FlowModel::from_json(random_model_description(opt, 600 + config));
    const auto samples = smooth_samples(60 + config, 150, m.dims(), 256);
    auto coder = filled(config, 400);
    double net = 0, nll = 0;
    std::vector<int64_t> x_hat(m.dims());
    std::vector<double> x(m.dims()), u(m.dims());
    for (const auto& s : samples) {
      // Replay the noise the encoder is about to draw on a copy of the stream.
      UbcsCoder peek = coder;
      LayerContext ctx{m.precision(), &peek, nullptr};
      m.dequantizer().decode_noise(s, x_hat, ctx);
      for (size_t i = 0; i < x.size(); ++i) {
        u[i] = mantissa_to_double(x_hat[i] - (int64_t{s[i]} << m.precision().k), m.precision().k);
        x[i] = s[i] + u[i];
      }
      nll += m.dequantizer().log2_q(s, u) - m.log2_density(x);
      CodelengthReport r;
      encode_sample(m, s, coder, &r);
      net += r.net_bits;
    }
    const double d = static_cast<double>(samples.size() * m.dims());
    const double gap = std::fabs(net / d - nll / d);
    worst = std::max(worst, gap);
    if (config < 2 || std::getenv("IFLOW_VERBOSE")) detail += format("bpd %.4f vs nll %.4f; ", net / d, nll / d);
  }
  return {worst <= 0.01, detail + format("8 models (3-6 layers), max |bpd - nll| %.5f", worst)};
}

// 7. Auxiliary bits per dimension against k + log2(S) / b.
//
// The peak is k bits of dequantization noise plus the r_d draws of the first
// MST group, log2(R) = log2(a S) per element. The formula takes a ~ 1, so the
// checked model works on data already near unit scale; a model that first
// shrinks [0, 256) by a ~ 2^-6 is reported alongside against k + log2(a S) / b.
Outcome aux_bits() {
  bool pass = true;
  std::string detail;
  for (int range : {4, 256}) {
    for (int b : {1, 2, 4}) {
      RandomModelOptions opt;
      opt.shape = {3, 16, 16};
      opt.layers = 5;
      opt.range_hi = range;
      opt.precision.b = b;
      const FlowModel m = FlowModel::from_json(random_model_description(opt, 77));
      const auto samples = smooth_samples(7, 4, m.dims(), range);
      double mean = 0;
      for (const auto& s : samples) mean += measure_aux_bits(m, s) / samples.size();
      const double shrink = std::log2(4.0 / range);
      const double expected = m.precision().k + (std::log2(m.precision().S) + shrink) / b;
      pass = pass && std::fabs(mean - expected) <= 2;
      detail += format("range %d b=%d: %.2f (expected %.2f); ", range, b, mean, expected);
    }
  }
  detail += "d=768, k=28, S=2^16";
  return {pass, detail};
}

// 8. Coder bandwidth.
Outcome bandwidth() {
  const size_t symbols = 4'000'000;
  const auto u1 = bench_bandwidth(CoderKind::kUbcs, symbols, 1, 5, 1);
  const auto r1 = bench_bandwidth(CoderKind::kRans, symbols, 1, 5, 1);
  const double ratio = u1.encode_msym_mean / r1.encode_msym_mean;
  std::string scaling;
  bool monotone = true;
  double previous = 0;
  for (int t : {1, 2, 4}) {
    const auto r = t == 1 ? u1 : bench_bandwidth(CoderKind::kUbcs, symbols, t, 5, 1);
    scaling += format("%s%d:%.0f", t == 1 ? "" : " ", t, r.encode_msym_mean);
    // Within one standard deviation counts as flat, not decreasing.
    if (r.encode_msym_mean + r.encode_msym_sd < previous) monotone = false;
    previous = std::max(previous, r.encode_msym_mean);
  }
  return {ratio >= 10 && monotone,
          format("ubcs enc %.1f+-%.1f dec %.1f+-%.1f, rans enc %.1f+-%.1f dec %.1f+-%.1f M sym/s (reference 1 "
                 "thread: ubcs 380/66.2, rans 5.1/0.80); encode ratio %.1fx (need 10x); ubcs thread scaling "
                 "[%s] %s; hardware threads %u",
                 u1.encode_msym_mean, u1.encode_msym_sd, u1.decode_msym_mean, u1.decode_msym_sd,
                 r1.encode_msym_mean, r1.encode_msym_sd, r1.decode_msym_mean, r1.decode_msym_sd, ratio,
                 scaling.c_str(), monotone ? "non-decreasing" : "decreasing", std::thread::hardware_concurrency())};
}

// 9. Sweep shape on the fixture.
Outcome sweep_shape() {
  const auto samples = sweep_fixture_samples(48, 7);
  const int h_values[] = {6, 8, 10, 12, 14};
  int cells = 0, mismatched = 0, rises = 0;
  double worst_rise = 0;
  const double tolerance = 0.01;
  for (int h : h_values) {
    double previous = INFINITY;
    for (int k = 18; k <= 32; ++k) {
      if (k <= h) continue;
      ++cells;
      const Precision p{k, h, 65536, 4};
      const FlowModel m = FlowModel::from_json(sweep_fixture_description(p));
      const bool predicted = flattest_cell_slope(m) == 0;
      bool failed = false;
      double bpd = 0;
      try {
        CodelengthReport r;
        compress(m, samples, {}, &r);
        bpd = r.bits_per_dim();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kCompressionFailure) throw;
        failed = true;
      }
      if (failed != predicted) ++mismatched;
      if (failed) continue;
      if (bpd > previous + tolerance) ++rises;
      if (std::isfinite(previous)) worst_rise = std::max(worst_rise, bpd - previous);
      previous = std::min(previous, bpd);
    }
  }
  return {mismatched == 0 && rises == 0,
          format("%d (k, h) cells, k=18..32, h=6..14; failure/prediction mismatches %d; bpd rises in k beyond %.2f: "
                 "%d (largest rise %.4f)",
                 cells, mismatched, tolerance, rises, worst_rise)};
}

// 10. LU reconstruction and conv1x1 codelength.
Outcome lu_and_conv() {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 16;
    std::vector<double> w(static_cast<size_t>(n) * n);
    for (auto& v : w) v = g(rng);
    double wmax = 0;
    for (double v : w) wmax = std::max(wmax, std::fabs(v));
    const auto rec = lu_decompose(w, n).reconstruct();
    double err = 0;
    for (size_t i = 0; i < w.size(); ++i) err = std::max(err, std::fabs(rec[i] - w[i]));
    worst = std::max(worst, err / wmax);
  }
  const Precision p{28, 12, 65536, 4};
  double worst_gap = 0;
  for (int trial = 0; trial < 8; ++trial) {
    const int C = 2 + trial % 5;
    const TensorShape shape{C, 4, 4};
    std::vector<double> w(static_cast<size_t>(C) * C);
    for (auto& v : w) v = g(rng);
    Conv1x1Layer layer(w, shape, p);
    auto aux = filled(trial, 2048);
    LayerContext ctx{p, &aux, nullptr};
    std::uniform_real_distribution<double> u(-2, 2);
    double grown = 0;
    const int n = 300;
    for (int i = 0; i < n; ++i) {
      std::vector<int64_t> x(shape.size());
      for (auto& v : x) v = quantize_mantissa(u(rng), p.k);
      const double b0 = aux.information_bits();
      layer.forward(x, ctx);
      grown += aux.information_bits() - b0;
    }
    worst_gap = std::max(worst_gap, std::fabs(grown / (n * shape.plane()) + log2_abs_det(w, C)));
  }
  return {worst < 1e-9 && worst_gap <= 0.02,
          format("1000 matrices up to 16x16: max |PLDU - W| / max|W| %.3g; conv1x1 bits vs -log2|det W| max gap "
                 "%.4f over 8 matrices",
                 worst, worst_gap)};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
      return 2;
    }
  }
  const std::function<Outcome()> criteria[] = {master_bijection, ubcs_round_trip, ubcs_codelength, mst_properties,
                                               elementwise_error, codelength_nll,  aux_bits,        bandwidth,
                                               sweep_shape,       lu_and_conv};
  bool all = true;
  for (int n = 1; n <= 10; ++n) {
    if (only != 0 && only != n) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[n - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s %s (%.1f s)\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
