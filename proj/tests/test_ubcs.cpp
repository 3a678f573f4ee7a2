// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "iflow/bench.hpp"
#include "iflow/errors.hpp"
#include "iflow/ubcs.hpp"

using namespace iflow;

namespace {

// (symbol, range) pairs with a mix of small, power-of-two and near-2^K ranges.
const std::vector<std::pair<uint32_t, uint32_t>> kSequence = {
    {750, 1000}, {1, 2}, {99, 256}, {144, 255}, {165, 1000}, {63, 256},
    {267, 1000}, {22851, 65536}, {391766, 1048576}, {46, 256}, {54017, 65536}, {349328, 1048576},
    {1, 5}, {334328971, 4294967295u}, {6, 7}, {164, 256}, {1, 2}, {13, 256},
    {54457, 65536}, {0, 2}, {1869957839, 2147483647}, {4, 5}, {2, 5}, {2, 3},
};

// Restores a small-K coder to an arbitrary legal state.
UbcsCoder at_state(int K, int M, uint64_t c, std::vector<uint32_t> words = {}) {
  UbcsCoder coder(K, M);
  coder.restore(c, std::move(words));
  return coder;
}

}  // namespace

TEST_CASE("ubcs encode examples") {
  auto small = at_state(3, 2, 20);
  small.encode(2, 5);
  CHECK(small.state() == 12);
  CHECK(small.words() == std::vector<uint32_t>{6});
  CHECK(small.decode(5) == 2);
  CHECK(small.state() == 20);
  CHECK(small.words().empty());

  UbcsCoder coder;
  CHECK(coder.state() == 16);
  coder.encode(3, 5);
  CHECK(coder.state() == 83);
  CHECK(coder.words().empty());
}

TEST_CASE("ubcs reference sequence matches an independent big-integer model") {
  UbcsCoder coder;
  for (auto [s, R] : kSequence) coder.encode(s, R);
  CHECK(coder.state() == 10486343u);
  CHECK(coder.words() == std::vector<uint32_t>{832315501u, 1059281219u, 1442469422u, 806704272u,
                                                334318985u, 1225643193u, 1869678205u});
  for (auto it = kSequence.rbegin(); it != kSequence.rend(); ++it) REQUIRE(coder.decode(it->second) == it->first);
  CHECK(coder == UbcsCoder());
}

TEST_CASE("rans baseline reference sequence") {
  RansUniformCoder coder;
  for (auto [s, R] : kSequence) coder.encode(s, R);
  CHECK(coder.state() == 2575686750669330ull);
  CHECK(coder.words() == std::vector<uint32_t>{2436235320u, 1151001471u, 1604674823u, 3540096061u,
                                                1430851271u, 224064987u, 1421467556u});
  for (auto it = kSequence.rbegin(); it != kSequence.rend(); ++it) REQUIRE(coder.decode(it->second) == it->first);
  CHECK(coder == RansUniformCoder());
}

TEST_CASE("ubcs state stays in range and round trips at several word sizes") {
  std::mt19937_64 rng(11);
  for (auto [K, M] : {std::pair{32, 4}, std::pair{16, 2}, std::pair{8, 3}, std::pair{3, 2}, std::pair{24, 1}}) {
    CAPTURE(K);
    UbcsCoder coder(K, M);
    std::vector<std::pair<uint32_t, uint32_t>> seq;
    for (int i = 0; i < 20000; ++i) {
      const uint64_t max_r = (uint64_t{1} << K) - 1;
      const uint32_t R = static_cast<uint32_t>(1 + rng() % max_r);
      const uint32_t s = static_cast<uint32_t>(rng() % R);
      coder.encode(s, R);
      REQUIRE(coder.state() >= (uint64_t{1} << M));
      REQUIRE(coder.state() < (uint64_t{1} << (K + M)));
      seq.emplace_back(s, R);
    }
    for (auto it = seq.rbegin(); it != seq.rend(); ++it) REQUIRE(coder.decode(it->second) == it->first);
    CHECK(coder == UbcsCoder(K, M));
  }
}

TEST_CASE("ubcs decode then encode restores any prior state") {
  std::mt19937_64 rng(5);
  UbcsCoder coder;
  for (int i = 0; i < 64; ++i) coder.push_word(static_cast<uint32_t>(rng()));
  for (int i = 0; i < 5000; ++i) {
    const UbcsCoder before = coder;
    const uint32_t R = static_cast<uint32_t>(1 + rng() % 0xfffffffful);
    const uint32_t s = coder.decode(R);
    REQUIRE(s < R);
    coder.encode(s, R);
    REQUIRE(coder == before);
  }
}

TEST_CASE("ubcs codelength is within the sum of log ranges plus slack") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    UbcsCoder coder;
    const double l0 = coder.information_bits();
    double sum = 0;
    for (int i = 0; i < 1000; ++i) {
      const uint32_t R = static_cast<uint32_t>(1 + rng() % 100000);
      coder.encode(static_cast<uint32_t>(rng() % R), R);
      sum += std::log2(static_cast<double>(R));
    }
    const double grown = coder.information_bits() - l0;
    // Renormalization multiplies only the head, so the measured growth may
    // fall slightly short of the ideal sum as well as exceed it.
    CHECK(grown >= sum - 1.0);
    CHECK(grown <= sum + 0.5);
    const double ln2 = std::log(2.0);
    const double bound = (sum + 1 + 1 / (ln2 * 16)) / (1 - 1 / (ln2 * 16 * 32));
    CHECK(static_cast<double>(coder.codelength_bits()) - std::ceil(l0) <= bound);
  }
}

TEST_CASE("ubcs errors") {
  UbcsCoder coder;
  CHECK_THROWS_AS(coder.encode(5, 5), Error);
  CHECK_THROWS_AS(coder.encode(0, 0), Error);
  try {
    coder.decode(1u << 20);
    FAIL("expected underflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAuxUnderflow);
  }
  UbcsCoder narrow(8, 2);
  CHECK_THROWS_AS(narrow.encode(0, 256), Error);
  CHECK_THROWS_AS(narrow.restore(2, {}), Error);
  CHECK_THROWS_AS(narrow.restore(1u << 10, {}), Error);
  CHECK_THROWS_AS(UbcsCoder(0, 4), Error);
  CHECK_THROWS_AS(UbcsCoder(33, 4), Error);
}

TEST_CASE("ubcs bit fields and wide ranges") {
  std::mt19937_64 rng(21);
  UbcsCoder coder;
  std::vector<std::pair<uint64_t, int>> bits;
  std::vector<std::pair<uint64_t, uint64_t>> wide;
  for (int i = 0; i < 2000; ++i) {
    const int n = static_cast<int>(rng() % 64) + 1;
    const uint64_t v = n == 64 ? rng() : rng() & ((uint64_t{1} << n) - 1);
    coder.encode_bits(v, n);
    bits.emplace_back(v, n);
    const uint64_t w = 1 + (rng() >> (rng() % 64));
    const uint64_t x = rng() % w;
    coder.encode_wide(x, w);
    wide.emplace_back(x, w);
  }
  for (int i = 1999; i >= 0; --i) {
    REQUIRE(coder.decode_wide(wide[i].second) == wide[i].first);
    REQUIRE(coder.decode_bits(bits[i].second) == bits[i].first);
  }
  CHECK(coder == UbcsCoder());
}

TEST_CASE("ubcs low water mark tracks refills") {
  UbcsCoder coder;
  for (uint32_t i = 0; i < 10; ++i) coder.push_word(i + 1);
  coder.reset_low_water();
  CHECK(coder.low_water() == 10);
  coder.decode_bits(64);
  CHECK(coder.low_water() < 10);
  const size_t lw = coder.low_water();
  coder.encode_bits(0, 64);
  CHECK(coder.low_water() == lw);
}

TEST_CASE("ubcs serialization round trips and rejects damage") {
  std::mt19937_64 rng(2);
  UbcsCoder coder;
  for (int i = 0; i < 300; ++i) coder.encode(static_cast<uint32_t>(rng() % 1000), 1000);
  const auto bytes = coder.serialize();
  CHECK(UbcsCoder::deserialize(bytes) == coder);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(UbcsCoder::deserialize(truncated), Error);
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(UbcsCoder::deserialize(longer), Error);
}

TEST_CASE("rans baseline handles trivial and full ranges") {
  std::mt19937_64 rng(4);
  RansUniformCoder coder;
  std::vector<std::pair<uint32_t, uint32_t>> seq;
  for (int i = 0; i < 20000; ++i) {
    const uint32_t R = i % 7 == 0 ? 1 : static_cast<uint32_t>(1 + rng() % 0xfffffffful);
    const uint32_t s = static_cast<uint32_t>(rng() % R);
    coder.encode(s, R);
    seq.emplace_back(s, R);
  }
  for (auto it = seq.rbegin(); it != seq.rend(); ++it) REQUIRE(coder.decode(it->second) == it->first);
  CHECK(coder == RansUniformCoder());
}

TEST_CASE("bandwidth benchmark runs and verifies") {
  for (CoderKind kind : {CoderKind::kUbcs, CoderKind::kRans}) {
    const auto r = bench_bandwidth(kind, 20000, 1, 2, 7);
    CHECK(r.encode_msym_mean > 0);
    CHECK(r.decode_msym_mean > 0);
    CHECK(r.runs == 2);
  }
  CHECK(coder_kind_name(CoderKind::kRans) == "rans");
}
