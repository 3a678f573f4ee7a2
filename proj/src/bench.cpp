// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "iflow/bench.hpp"

#include <barrier>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>
#include <vector>

#include "iflow/errors.hpp"
#include "iflow/ubcs.hpp"

namespace iflow {

std::string_view coder_kind_name(CoderKind kind) {
  return kind == CoderKind::kUbcs ? "ubcs" : "rans";
}

namespace {

struct Workload {
  std::vector<uint32_t> s;
  std::vector<uint32_t> R;
};

Workload make_workload(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<uint32_t> range(2, 1u << 16);
  Workload w;
  w.s.resize(n);
  w.R.resize(n);
  for (size_t i = 0; i < n; ++i) {
    w.R[i] = range(rng);
    w.s[i] = static_cast<uint32_t>(rng() % w.R[i]);
  }
  return w;
}

template <typename Coder>
void run_encode(Coder& coder, const Workload& w) {
  const size_t n = w.s.size();
  for (size_t i = 0; i < n; ++i) coder.encode(w.s[i], w.R[i]);
}

template <typename Coder>
bool run_decode(Coder& coder, const Workload& w) {
  bool ok = true;
  for (size_t i = w.s.size(); i-- > 0;) ok &= coder.decode(w.R[i]) == w.s[i];
  return ok;
}

template <typename Coder>
void one_run(const std::vector<Workload>& loads, int threads, double& enc_s, double& dec_s,
             Coder prototype) {
  using clock = std::chrono::steady_clock;
  std::vector<Coder> coders(static_cast<size_t>(threads), prototype);
  std::barrier sync(threads + 1);
  std::vector<char> ok(static_cast<size_t>(threads), 1);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      sync.arrive_and_wait();
      run_encode(coders[t], loads[t]);
      sync.arrive_and_wait();
      sync.arrive_and_wait();
      ok[t] = run_decode(coders[t], loads[t]) ? 1 : 0;
      sync.arrive_and_wait();
    });
  }
  sync.arrive_and_wait();
  const auto t0 = clock::now();
  sync.arrive_and_wait();
  const auto t1 = clock::now();
  sync.arrive_and_wait();
  const auto t2 = clock::now();
  sync.arrive_and_wait();
  const auto t3 = clock::now();
  for (auto& th : pool) th.join();
  for (char c : ok) {
    if (!c) fail(ErrorCode::kCorruptStream, "benchmark round trip mismatch");
  }
  enc_s = std::chrono::duration<double>(t1 - t0).count();
  dec_s = std::chrono::duration<double>(t3 - t2).count();
}

void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace

BandwidthResult bench_bandwidth(CoderKind coder, size_t symbols, int threads, int runs,
                                uint64_t seed) {
  if (symbols == 0 || threads < 1 || runs < 1) {
    fail(ErrorCode::kParameter, "benchmark needs symbols > 0, threads >= 1, runs >= 1");
  }
  std::vector<Workload> loads;
  for (int t = 0; t < threads; ++t) loads.push_back(make_workload(symbols, seed + 7919 * t));

  std::vector<double> enc, dec;
  const double total = static_cast<double>(symbols) * threads / 1e6;
  // One untimed warm-up run so page faults in the word stacks are not measured.
  for (int r = -1; r < runs; ++r) {
    double e = 0, d = 0;
    if (coder == CoderKind::kUbcs) {
      one_run(loads, threads, e, d, UbcsCoder(32, 4));
    } else {
      one_run(loads, threads, e, d, RansUniformCoder(32));
    }
    if (r < 0) continue;
    enc.push_back(total / e);
    dec.push_back(total / d);
  }
  BandwidthResult out;
  out.coder = coder;
  out.threads = threads;
  out.symbols_per_thread = symbols;
  out.runs = runs;
  mean_sd(enc, out.encode_msym_mean, out.encode_msym_sd);
  mean_sd(dec, out.decode_msym_mean, out.decode_msym_sd);
  return out;
}

}  // namespace iflow
