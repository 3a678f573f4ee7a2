// Copyright 2026 The iflow Authors
// SPDX-License-Identifier: Apache-2.0

// iflow command-line tool: compress, decompress, verify, bench, sweep and
// gen-model.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "iflow/bench.hpp"
#include "iflow/codec.hpp"
#include "iflow/container.hpp"
#include "iflow/errors.hpp"
#include "iflow/fixture.hpp"
#include "iflow/image_io.hpp"
#include "iflow/model.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace iflow;

namespace {

enum Exit {
  kOk = 0,
  kUsage = 1,
  kIoError = 2,
  kCompressionError = 3,
  kStreamError = 4,
  kModelError = 5,
  kAuxError = 6,
};

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParameter: return kUsage;
    case ErrorCode::kIo:
    case ErrorCode::kRange: return kIoError;
    case ErrorCode::kDomain:
    case ErrorCode::kDegenerateScale:
    case ErrorCode::kCompressionFailure: return kCompressionError;
    case ErrorCode::kCorruptStream:
    case ErrorCode::kHashMismatch:
    case ErrorCode::kVersion: return kStreamError;
    case ErrorCode::kModel: return kModelError;
    case ErrorCode::kAuxUnderflow:
    case ErrorCode::kInsufficientAuxBits: return kAuxError;
  }
  return kUsage;
}

int default_threads() {
  if (const char* env = std::getenv("IFLOW_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid IFLOW_THREADS=" << env << "\n";
  }
  return 1;
}

std::vector<uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct PrecisionFlags {
  std::optional<int> k, h, b;
  std::optional<uint32_t> S;

  void add(CLI::App* app) {
    app->add_option("--k", k, "fractional bits of every intermediate value");
    app->add_option("--h", h, "interpolation grid spacing 2^-h");
    app->add_option("--S", S, "MST denominator");
    app->add_option("--b", b, "sequential MST splits");
  }
  bool any() const { return k || h || b || S; }
  Precision apply(Precision p) const {
    if (k) p.k = *k;
    if (h) p.h = *h;
    if (S) p.S = *S;
    if (b) p.b = *b;
    return p;
  }
};

FlowModel load_model(const fs::path& path, const PrecisionFlags& flags) {
  FlowModel model = FlowModel::load(path);
  if (!flags.any()) return model;
  const Precision p = flags.apply(model.precision());
  p.validate(model.coder_bits());
  return model.with_precision(p);
}

json report_json(const CodelengthReport& r, const Image& img, const Container& c, size_t container_bytes) {
  json j = r.to_json();
  const double image_dims = static_cast<double>(img.channels) * img.height * img.width;
  j["image"] = {{"shape", {img.channels, img.height, img.width}}, {"patches", r.samples}};
  j["container_bytes"] = container_bytes;
  j["bits_per_image_dim"] = 8.0 * static_cast<double>(container_bytes) / image_dims;
  j["precision"] = {{"k", c.precision.k}, {"h", c.precision.h}, {"S", c.precision.S}, {"b", c.precision.b}};
  j["lanes"] = c.lanes.size();
  return j;
}

void print_report_text(const CodelengthReport& r, const json& j) {
  std::cout << "patches          " << r.samples << " x " << r.dims_per_sample << " dims\n";
  std::cout << "bpd              " << fmt("%.4f", r.bits_per_dim()) << "\n";
  std::cout << "aux bits/dim     " << fmt("%.2f", r.aux_bits_per_dim()) << "\n";
  std::cout << "container        " << j.at("container_bytes").get<size_t>() << " bytes ("
            << fmt("%.4f", j.at("bits_per_image_dim").get<double>()) << " bits per image dim)\n";
  const double dims = static_cast<double>(r.samples) * static_cast<double>(r.dims_per_sample);
  std::cout << "bits back        " << fmt("%+.4f", -r.dequant_bits / dims) << " bpd\n";
  for (size_t i = 0; i < r.layer_bits.size(); ++i) {
    std::printf("layer %-2zu %-14s %+.4f bpd\n", i, r.layer_kinds[i].c_str(), r.layer_bits[i] / dims);
  }
  std::cout << "prior            " << fmt("%+.4f", r.prior_bits / dims) << " bpd\n";
  std::cout << "time             inference " << fmt("%.3f", r.inference_seconds) << " s, coding "
            << fmt("%.3f", r.coding_seconds) << " s\n";
}

// ---------------------------------------------------------------------------

struct CodecFlags {
  std::string model, input, output, container, report = "text";
  int threads = default_threads();
  int lanes = 0;
  uint64_t seed = CodecOptions{}.seed;
  PrecisionFlags precision;
};

int cmd_compress(const CodecFlags& f) {
  const FlowModel model = load_model(f.model, f.precision);
  const Image img = read_image(f.input);
  const auto patches = tile_image(img, model.shape());
  CodecOptions opt;
  opt.seed = f.seed;
  opt.threads = f.threads;
  opt.lanes = f.lanes > 0 ? f.lanes : f.threads;
  const std::string meta = img.describe().dump();
  opt.metadata.assign(meta.begin(), meta.end());
  CodelengthReport r;
  const Container c = compress(model, patches, opt, &r);
  const auto bytes = c.serialize();
  write_file(f.output, bytes);
  const json j = report_json(r, img, c, bytes.size());
  if (f.report == "json") {
    std::cout << j.dump(2) << "\n";
  } else {
    print_report_text(r, j);
  }
  return kOk;
}

std::pair<Image, CodelengthReport> decode_container(const fs::path& model_path, const fs::path& container_path,
                                                    int threads) {
  const Container c = Container::parse(read_file(container_path));
  FlowModel model = FlowModel::load(model_path);
  if (model.precision() != c.precision) model = model.with_precision(c.precision);
  CodelengthReport r;
  const auto patches = decompress(model, c, threads, &r);
  json desc;
  try {
    desc = json::parse(std::string(c.metadata.begin(), c.metadata.end()));
  } catch (const json::exception&) {
    fail(ErrorCode::kCorruptStream, "container metadata is not an image description");
  }
  Image img = Image::from_description(desc);
  untile_image(patches, model.shape(), img);
  return {std::move(img), r};
}

int cmd_decompress(const CodecFlags& f) {
  auto [img, r] = decode_container(f.model, f.input, f.threads);
  write_image(f.output, img);
  if (f.report == "json") {
    json j = r.to_json();
    j["output"] = f.output;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "decoded " << r.samples << " patches to " << f.output << " (inference "
              << fmt("%.3f", r.inference_seconds) << " s, coding " << fmt("%.3f", r.coding_seconds) << " s)\n";
  }
  return kOk;
}

int cmd_verify(const CodecFlags& f) {
  const auto original = read_file(f.input);
  fs::path container = f.container;
  fs::path scratch;
  if (container.empty()) {
    scratch = fs::temp_directory_path() / ("iflow-verify-" + std::to_string(::getpid()) + ".iflw");
    CodecFlags g = f;
    g.output = scratch.string();
    g.report = "none";
    const FlowModel model = load_model(f.model, f.precision);
    const Image img = read_image(f.input);
    CodecOptions opt;
    opt.seed = f.seed;
    opt.threads = f.threads;
    opt.lanes = f.lanes > 0 ? f.lanes : f.threads;
    const std::string meta = img.describe().dump();
    opt.metadata.assign(meta.begin(), meta.end());
    write_file(scratch, compress(model, tile_image(img, model.shape()), opt).serialize());
    container = scratch;
  }
  const fs::path decoded = fs::temp_directory_path() / ("iflow-verify-" + std::to_string(::getpid()) + ".out");
  int rc = kOk;
  try {
    auto [img, r] = decode_container(f.model, container, f.threads);
    write_image(decoded, img);
    const bool same = read_file(decoded) == original;
    std::cout << (same ? "OK" : "MISMATCH") << ": " << f.input << "\n";
    rc = same ? kOk : kStreamError;
  } catch (...) {
    if (!scratch.empty()) fs::remove(scratch);
    fs::remove(decoded);
    throw;
  }
  if (!scratch.empty()) fs::remove(scratch);
  fs::remove(decoded);
  return rc;
}

// ---------------------------------------------------------------------------

struct BenchFlags {
  std::string coder = "both";
  std::vector<int> threads;
  size_t symbols = 10'000'000;
  int runs = 5;
  uint64_t seed = 1;
  std::string report = "text";
};

// Reference bandwidths (M symbol/s, mean and sd) reported for the original
// implementation: thread count, rANS encode, UBCS encode, rANS decode, UBCS decode.
struct ReferenceRow {
  int threads;
  double rans_enc[2], ubcs_enc[2], rans_dec[2], ubcs_dec[2];
};
constexpr ReferenceRow kReference[] = {
    {1, {5.1, 0.3}, {380, 5}, {0.80, 0.02}, {66.2, 1.7}},
    {4, {10.8, 1.9}, {709, 56}, {2.8, 0.1}, {248, 8}},
    {8, {15.9, 1.4}, {1297, 137}, {5.5, 0.2}, {460, 16}},
    {16, {21.6, 1.1}, {2075, 353}, {7.4, 0.5}, {552, 50}},
};

int cmd_bench(BenchFlags f) {
  if (f.threads.empty()) f.threads = {default_threads()};
  std::vector<CoderKind> kinds;
  if (f.coder == "ubcs" || f.coder == "both") kinds.push_back(CoderKind::kUbcs);
  if (f.coder == "rans" || f.coder == "both") kinds.push_back(CoderKind::kRans);
  json rows = json::array();
  std::vector<BandwidthResult> results;
  for (int t : f.threads) {
    for (CoderKind k : kinds) {
      const BandwidthResult r = bench_bandwidth(k, f.symbols, t, f.runs, f.seed);
      results.push_back(r);
      rows.push_back({{"coder", coder_kind_name(k)},
                      {"threads", t},
                      {"symbols_per_thread", f.symbols},
                      {"runs", f.runs},
                      {"encode_msym_mean", r.encode_msym_mean},
                      {"encode_msym_sd", r.encode_msym_sd},
                      {"decode_msym_mean", r.decode_msym_mean},
                      {"decode_msym_sd", r.decode_msym_sd}});
    }
  }
  json ref = json::array();
  for (const auto& r : kReference) {
    ref.push_back({{"threads", r.threads},
                   {"rans_encode", {r.rans_enc[0], r.rans_enc[1]}},
                   {"ubcs_encode", {r.ubcs_enc[0], r.ubcs_enc[1]}},
                   {"rans_decode", {r.rans_dec[0], r.rans_dec[1]}},
                   {"ubcs_decode", {r.ubcs_dec[0], r.ubcs_dec[1]}}});
  }
  std::optional<double> ratio;
  double u = 0, r = 0;
  for (const auto& res : results) {
    if (res.threads != 1) continue;
    (res.coder == CoderKind::kUbcs ? u : r) = res.encode_msym_mean;
  }
  if (u > 0 && r > 0) ratio = u / r;
  if (f.report == "json") {
    json j = {{"schema", "iflow-bench-report"}, {"schema_version", 1}, {"results", rows}, {"reference", ref}};
    if (ratio) j["single_thread_encode_ratio"] = *ratio;
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  std::cout << "coding bandwidth (M symbol/s, mean +- sd over " << f.runs << " runs, " << f.symbols
            << " symbols per thread)\n";
  std::cout << "coder  thrd      encode              decode\n";
  for (const auto& res : results) {
    std::printf("%-5s  %4d  %8.1f +- %-7.1f  %8.1f +- %-7.1f\n", std::string(coder_kind_name(res.coder)).c_str(),
                res.threads, res.encode_msym_mean, res.encode_msym_sd, res.decode_msym_mean, res.decode_msym_sd);
  }
  if (ratio) std::printf("single-thread encode ratio ubcs/rans: %.1fx\n", *ratio);
  std::cout << "\nreference values (original implementation, M symbol/s)\n";
  std::cout << "thrd   rans enc       ubcs enc        rans dec       ubcs dec\n";
  for (const auto& row : kReference) {
    std::printf("%4d  %5.1f +- %-4.1f  %6.0f +- %-5.0f  %5.2f +- %-4.2f  %6.1f +- %-5.1f\n", row.threads,
                row.rans_enc[0], row.rans_enc[1], row.ubcs_enc[0], row.ubcs_enc[1], row.rans_dec[0],
                row.rans_dec[1], row.ubcs_dec[0], row.ubcs_dec[1]);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct SweepFlags {
  std::string k_range = "18:32:2";
  std::string h_range = "6:14:2";
  size_t samples = 64;
  uint64_t seed = 7;
  uint32_t S = 1u << 16;
  int b = 4;
  std::string report = "text";
};

std::vector<int> parse_range(const std::string& text) {
  std::vector<int> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(std::stoi(item));
  if (parts.size() == 1) return {parts[0]};
  if (parts.size() < 2 || parts.size() > 3) fail(ErrorCode::kParameter, "range must be lo:hi[:step]");
  const int step = parts.size() == 3 ? parts[2] : 1;
  if (step < 1 || parts[1] < parts[0]) fail(ErrorCode::kParameter, "range must be increasing with a positive step");
  std::vector<int> out;
  for (int v = parts[0]; v <= parts[1]; v += step) out.push_back(v);
  return out;
}

int cmd_sweep(const SweepFlags& f) {
  std::vector<int> ks, hs;
  try {
    ks = parse_range(f.k_range);
    hs = parse_range(f.h_range);
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::kParameter, "range values must be integers");
  }
  const auto samples = sweep_fixture_samples(f.samples, f.seed);
  json cells = json::array();
  struct Cell {
    bool ok;
    double bpd, aux;
  };
  std::vector<std::vector<Cell>> grid(ks.size(), std::vector<Cell>(hs.size()));
  for (size_t i = 0; i < ks.size(); ++i) {
    for (size_t j = 0; j < hs.size(); ++j) {
      Precision p{ks[i], hs[j], f.S, f.b};
      Cell cell{false, 0, 0};
      json entry = {{"k", ks[i]}, {"h", hs[j]}};
      if (hs[j] >= ks[i]) {
        entry["status"] = "invalid";
      } else {
        const FlowModel model = FlowModel::from_json(sweep_fixture_description(p));
        entry["predicted_failure"] = flattest_cell_slope(model) == 0;
        try {
          CodelengthReport r;
          const Container c = compress(model, samples, {}, &r);
          (void)c;
          cell = {true, r.bits_per_dim(), r.aux_bits_per_dim()};
          entry["status"] = "ok";
          entry["bpd"] = cell.bpd;
          entry["aux_bits_per_dim"] = cell.aux;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kCompressionFailure) throw;
          entry["status"] = "fail";
        }
      }
      grid[i][j] = cell;
      cells.push_back(entry);
    }
  }
  if (f.report == "json") {
    std::cout << json{{"schema", "iflow-sweep-report"}, {"schema_version", 1}, {"samples", f.samples},
                      {"S", f.S}, {"b", f.b}, {"cells", cells}}
                     .dump(2)
              << "\n";
    return kOk;
  }
  auto table = [&](const char* title, bool bpd) {
    std::cout << title << "\n   k \\ h";
    for (int h : hs) std::printf("  %8d", h);
    std::cout << "\n";
    for (size_t i = 0; i < ks.size(); ++i) {
      std::printf("  %6d", ks[i]);
      for (size_t j = 0; j < hs.size(); ++j) {
        if (grid[i][j].ok) {
          std::printf("  %8.4f", bpd ? grid[i][j].bpd : grid[i][j].aux);
        } else {
          std::printf("  %8s", "FAIL");
        }
      }
      std::cout << "\n";
    }
  };
  table("bpd", true);
  table("\naux bits per dim", false);
  return kOk;
}

// ---------------------------------------------------------------------------

struct GenFlags {
  std::string output;
  uint64_t seed = 1;
  int layers = 4;
  std::vector<int> shape{3, 4, 4};
  bool flow_dequantizer = false;
  bool uniform_prior = false;
  bool fixture = false;
  PrecisionFlags precision;
};

int cmd_gen_model(const GenFlags& f) {
  const Precision p = f.precision.apply(Precision{});
  p.validate();
  json desc;
  if (f.fixture) {
    desc = sweep_fixture_description(p);
  } else {
    if (f.shape.size() != 3) fail(ErrorCode::kParameter, "--shape needs three values C H W");
    RandomModelOptions opt;
    opt.shape = {f.shape[0], f.shape[1], f.shape[2]};
    opt.layers = f.layers;
    opt.precision = p;
    opt.flow_dequantizer = f.flow_dequantizer;
    opt.uniform_prior = f.uniform_prior;
    desc = random_model_description(opt, f.seed);
  }
  const FlowModel model = FlowModel::from_json(desc);
  model.save(f.output);
  std::cout << "wrote " << f.output << " (" << model.layers().size() << " layers, sha256 " << model.content_hash()
            << ")\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iflow: lossless compression with quantized normalizing flows"};
  // --h is the grid precision, so help is long-form only.
  app.set_help_flag("--help", "print this help message and exit");
  app.require_subcommand(1);
  app.set_version_flag("--version", "iflow 1.0.0");

  CodecFlags codec;
  auto add_codec = [&](CLI::App* sub, bool output, bool precision) {
    sub->add_option("-m,--model", codec.model, "model file")->required()->check(CLI::ExistingFile);
    sub->add_option("-i,--input", codec.input, "input file")->required()->check(CLI::ExistingFile);
    if (output) sub->add_option("-o,--output", codec.output, "output file")->required();
    sub->add_option("-t,--threads", codec.threads, "worker threads (default: IFLOW_THREADS or 1)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--report", codec.report, "report format")->check(CLI::IsMember({"text", "json"}));
    if (precision) {
      sub->add_option("--lanes", codec.lanes, "independent streams (default: one per thread)")
          ->check(CLI::NonNegativeNumber);
      sub->add_option("--seed", codec.seed, "seed of the auxiliary fill");
      codec.precision.add(sub);
    }
  };
  auto* compress_cmd = app.add_subcommand("compress", "compress an image or raw tensor");
  add_codec(compress_cmd, true, true);
  auto* decompress_cmd = app.add_subcommand("decompress", "decompress a container");
  add_codec(decompress_cmd, true, false);
  auto* verify_cmd = app.add_subcommand("verify", "check that a file survives a round trip byte for byte");
  add_codec(verify_cmd, false, true);
  verify_cmd->add_option("-c,--container", codec.container, "existing container to check against the input")
      ->check(CLI::ExistingFile);

  BenchFlags bench;
  auto* bench_cmd = app.add_subcommand("bench", "measure entropy coder bandwidth");
  bench_cmd->add_option("--coder", bench.coder, "coder")->check(CLI::IsMember({"ubcs", "rans", "both"}));
  bench_cmd->add_option("--threads", bench.threads, "thread counts, e.g. 1,2,4")->delimiter(',')
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--symbols", bench.symbols, "symbols per thread per run")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--runs", bench.runs, "timed runs (at least 5)")->check(CLI::Range(5, 1000));
  bench_cmd->add_option("--seed", bench.seed, "workload seed");
  bench_cmd->add_option("--report", bench.report, "report format")->check(CLI::IsMember({"text", "json"}));

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "bpd over a (k, h) grid on the sweep fixture");
  sweep_cmd->add_option("--k-range", sweep.k_range, "lo:hi[:step]");
  sweep_cmd->add_option("--h-range", sweep.h_range, "lo:hi[:step]");
  sweep_cmd->add_option("--samples", sweep.samples, "fixture samples")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", sweep.seed, "data seed");
  sweep_cmd->add_option("--S", sweep.S, "MST denominator");
  sweep_cmd->add_option("--b", sweep.b, "sequential MST splits")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--report", sweep.report, "report format")->check(CLI::IsMember({"text", "json"}));

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-model", "write a random test model or the sweep fixture");
  gen_cmd->add_option("-o,--output", gen.output, "model file")->required();
  gen_cmd->add_option("--seed", gen.seed, "parameter seed");
  gen_cmd->add_option("--layers", gen.layers, "number of layers")->check(CLI::Range(1, 64));
  gen_cmd->add_option("--shape", gen.shape, "C,H,W")->delimiter(',')->expected(3);
  gen_cmd->add_flag("--flow-dequantizer", gen.flow_dequantizer, "use the flow dequantizer");
  gen_cmd->add_flag("--uniform-prior", gen.uniform_prior, "use a uniform prior");
  gen_cmd->add_flag("--fixture", gen.fixture, "write the sweep fixture instead of a random model");
  gen.precision.add(gen_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*compress_cmd) return cmd_compress(codec);
    if (*decompress_cmd) return cmd_decompress(codec);
    if (*verify_cmd) return cmd_verify(codec);
    if (*bench_cmd) return cmd_bench(bench);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*gen_cmd) return cmd_gen_model(gen);
  } catch (const Error& e) {
    std::cerr << "iflow: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "iflow: " << e.what() << "\n";
    return kIoError;
  }
  return kUsage;
}
