// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1).

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "cli.hpp"
#include "gwlz/byte_io.hpp"
#include "gwlz/codec.hpp"
#include "gwlz/container.hpp"
#include "gwlz/enhancer.hpp"
#include "gwlz/error.hpp"
#include "gwlz/metrics.hpp"
#include "support.hpp"

using namespace gwlz;
using gwlz::testing::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = gwlz::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

double max_abs_diff(const Volume& a, const Volume& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// The desk-scale field shared by the enhancement criteria.
SyntheticSpec desk_field() {
  SyntheticSpec s;
  s.kind = SyntheticKind::skewed_exponential;
  s.dims = {64, 64, 64};
  s.seed = 7;
  return s;
}

constexpr double kDeskReb = 1e-2;
constexpr std::uint32_t kDeskEpochs = 100;
constexpr std::uint64_t kTrainSeed = 1;

FitOptions desk_options(std::uint32_t groups, std::uint32_t channels) {
  FitOptions o;
  o.n_groups = groups;
  o.train.epochs = kDeskEpochs;
  o.train.seed = kTrainSeed;
  o.train.channels = channels;
  return o;
}

// Random volume of one of four characters; extents in [lo, hi].
Volume mixed_volume(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> ext(lo, hi);
  const Dims d{ext(rng), ext(rng), ext(rng)};
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int kind = int(rng() % 4);
  const double scale = std::pow(10.0, 4.0 * u(rng));
  const double offset = scale * 5.0 * u(rng);
  const double f[3] = {2.0 * u(rng), 2.0 * u(rng), 2.0 * u(rng)};
  std::vector<float> v(element_count(d));
  std::size_t idx = 0;
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k, ++idx) {
        double x = offset;
        switch (kind) {
          case 0: x += scale * std::sin(f[0] * i / 3.0 + f[1] * j / 4.0) * std::cos(f[2] * k / 5.0); break;
          case 1:
            x += scale * 0.05 * std::sin(double(i + j + k) / 6.0);
            if (u(rng) > 0.95) x += scale * 1e3 * u(rng);
            break;
          case 2: break;
          default: x += scale * u(rng); break;
        }
        v[idx] = float(x);
      }
  return Volume(d, std::move(v));
}

// ---- criteria ----

Outcome error_bound() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::size_t elements = 0, outliers = 0;
  for (int t = 0; t < 1000; ++t) {
    const Volume x = mixed_volume(rng, 1, 32);
    const double reb = std::pow(10.0, -1.0 - 5.0 * double(rng() % 10000) / 10000.0);
    const std::uint32_t maxq = (t % 5 == 0) ? 1 + std::uint32_t(rng() % 64) : 32767;
    const auto cfg = make_config(reb, x, maxq);
    const auto c = compress(x, cfg);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!(std::abs(double(x[i]) - double(c.decompressed[i])) <= cfg.abs_bound))
        return {false, fmt::format("volume {} element {} violates e={}", t, i, cfg.abs_bound)};
    if (!(decompress(serialize_payload(c.payload)) == c.decompressed))
      return {false, fmt::format("volume {}: decompress differs from compress-side reconstruction", t)};
    elements += x.size();
    outliers += c.payload.outliers.size();
  }
  const double secs = seconds_since(t0);
  return {secs < 60.0, fmt::format("1000 volumes, {} elements, {} outliers, {:.1f}s (limit 60s)", elements, outliers, secs)};
}

Outcome psnr_oracle() {
  const double a = psnr(Volume({1, 1, 2}, {0.0f, 1.0f}), Volume({1, 1, 2}, {0.0f, 0.9f}));
  const double b = psnr(Volume({1, 1, 2}, {0.0f, 2.0f}), Volume({1, 1, 2}, {1.0f, 1.0f}));
  const double c = psnr(Volume({1, 1, 2}, {0.0f, 2.0f}), Volume({1, 1, 2}, {0.0f, 2.0f}));
  // Oracles: 0.9f is the binary32 nearest 0.9, so the exact mse is (1 - 0.9f)^2 / 2.
  const double d9 = 1.0 - double(0.9f);
  const double want_a = -10.0 * std::log10(d9 * d9 / 2.0);
  const double want_b = 20.0 * std::log10(2.0);
  const bool ok = std::abs(a - want_a) < 1e-6 && std::abs(a - 23.0103) < 1e-4 && std::abs(b - want_b) < 1e-6 &&
                  std::abs(b - 6.0206) < 1e-4 && std::isinf(c) && c > 0;
  return {ok, fmt::format("{:.7f} dB, {:.7f} dB, identical -> {}", a, b, format_number(c))};
}

Outcome table_arithmetic() {
  struct Row {
    double base, enh, printed;
  };
  const Row rows[] = {{60.7, 73.0, 20.2}, {72.8, 80.8, 11.0}, {77.6, 83.8, 8.1},   {88.0, 91.9, 4.4},
                      {92.7, 95.3, 2.8},  {105.1, 106.7, 1.5}, {72.4, 77.6, 7.3},  {77.3, 85.0, 9.9},
                      {80.7, 88.4, 9.6},  {89.6, 97.7, 9.0},   {93.4, 102.1, 9.3}, {105.0, 112.3, 7.0}};
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, std::abs(improvement_pct(r.base, r.enh) - r.printed));
  return {worst <= 0.15, fmt::format("12 rows, worst deviation {:.3f} points (limit 0.15)", worst)};
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(99);
  double worst = 0.0, weakest_mutant = INFINITY;
  for (int t = 0; t < 50; ++t) {
    ModelWeights w = init_model(rng(), kDefaultChannels);
    std::normal_distribution<double> n(0.0, 0.5);
    auto flat = flatten_params(w);
    for (auto& v : flat) v = n(rng);
    assign_params(w, flat);
    const std::size_t rows = 4 + rng() % 9, cols = 4 + rng() % 9;
    MaskedPair p{{rows, cols, {}}, {rows, cols, {}}, {}};
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::size_t i = 0; i < rows * cols; ++i) {
      const bool in = u(rng) < 0.75f;
      p.mask.push_back(in);
      p.input.values.push_back(in ? u(rng) : 0.0f);
      p.target.values.push_back(in ? 2.0f * u(rng) - 1.0f : 0.0f);
    }
    worst = std::max(worst, grad_check(w, p));
    weakest_mutant = std::min(weakest_mutant, detail::grad_check(w, p, 1e-4, detail::GradFault::negate_conv1));
  }
  return {worst < 1e-3 && weakest_mutant > 1.0,
          fmt::format("50 instances, max relative error {:.2e}; negated backward scores >= {:.3f}", worst, weakest_mutant)};
}

Outcome mask_isolation() {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const ModelWeights w = [&] {
      ModelWeights m = init_model(rng());
      auto flat = flatten_params(m);
      std::normal_distribution<double> n(0.0, 0.4);
      for (auto& v : flat) v = n(rng);
      assign_params(m, flat);
      return m;
    }();
    std::vector<MaskedPair> batch;
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int s = 0; s < 3; ++s) {
      MaskedPair p{{6, 7, {}}, {6, 7, {}}, {}};
      for (int i = 0; i < 42; ++i) {
        const bool in = u(rng) < 0.5f;
        p.mask.push_back(in);
        p.input.values.push_back(in ? u(rng) : 0.0f);
        p.target.values.push_back(in ? u(rng) : 0.0f);
      }
      batch.push_back(p);
    }
    const auto before = masked_loss_and_gradient(w, batch);
    for (auto& p : batch)
      for (std::size_t i = 0; i < p.mask.size(); ++i)
        if (!p.mask[i]) p.target.values[i] = 1e3f * (u(rng) - 0.5f);
    const auto after = masked_loss_and_gradient(w, batch);
    if (before.loss != after.loss || before.gradient != after.gradient)
      return {false, fmt::format("instance {}: loss or gradient changed", t)};
  }
  return {true, "20 instances, loss and all 190 gradient components bit-identical"};
}

Outcome identity_safety() {
  SyntheticSpec s = desk_field();
  s.dims = {32, 32, 32};
  const Volume x = gen_synthetic(s);
  const auto c = compress(x, make_config(kDeskReb, x));
  const GroupSpec spec = build_spec(c.decompressed, 20, GroupStrategy::quantile);
  const auto bundle = zero_bundle(spec, compute_stats(x, c.decompressed, spec));
  const Volume r = predict_residual(bundle, c.decompressed, 0);
  bool zero = true;
  for (float v : r.values()) zero = zero && v == 0.0f;
  const Volume y = enhance(c.decompressed, bundle, ClampMode::none(), 0);
  const double pb = psnr(x, c.decompressed), pe = psnr(x, y);
  const bool same = std::memcmp(&pb, &pe, sizeof pb) == 0 && y == c.decompressed;
  // Freshly initialized models are zero models too.
  auto fresh = bundle;
  for (std::uint32_t g = 0; g < spec.n_groups; ++g) fresh.models[g] = init_model(g);
  const bool fresh_same = enhance(c.decompressed, fresh, ClampMode::none(), 0) == c.decompressed;
  return {zero && same && fresh_same, fmt::format("psnr {} == {} (bitwise {}), fresh init identity {}", format_number(pb),
                                                  format_number(pe), same, fresh_same)};
}

struct DeskRun {
  double psnr_base = 0, psnr_enh = 0, mean_loss = 0, secs = 0;
};

DeskRun desk_run(std::uint32_t groups, std::uint32_t channels) {
  const auto t0 = Clock::now();
  const Volume x = gen_synthetic(desk_field());
  const auto c = compress(x, make_config(kDeskReb, x));
  const auto bundle = fit(x, c.decompressed, desk_options(groups, channels));
  const Volume y = enhance(c.decompressed, bundle, ClampMode::none(), 0);
  return {psnr(x, c.decompressed), psnr(x, y), bundle.mean_final_loss(), seconds_since(t0)};
}

DeskRun g_four_groups;

Outcome desk_gain() {
  g_four_groups = desk_run(4, kDefaultChannels);
  const auto& r = g_four_groups;
  const double gain = r.psnr_enh - r.psnr_base;
  return {gain >= 0.5 && r.secs < 600.0,
          fmt::format("64^3 skewed, reb 1e-2, 4 groups, {} epochs: {:.3f} -> {:.3f} dB (+{:.3f}, need +0.5) in {:.0f}s", kDeskEpochs,
                      r.psnr_base, r.psnr_enh, gain, r.secs)};
}

Outcome groupwise_benefit() {
  // Equal budget: four 9-channel models (4 x 190 = 760 parameters) against
  // one 36-channel model (757 parameters).
  const DeskRun single = desk_run(1, 4 * kDefaultChannels);
  const double four = g_four_groups.mean_loss;
  const double rel = (single.mean_loss - four) / single.mean_loss;
  const bool loss_ok = four < single.mean_loss && rel >= 0.05;

  TempDir dir;
  save_raw(gen_synthetic(desk_field()), dir / "x.f32");
  const auto bench = run_cli({"bench", "--input", (dir / "x.f32").string(), "--dims", "64x64x64", "--rebs", "1e-2", "--groups-list",
                              "1,2,4", "--epochs", std::to_string(kDeskEpochs), "--seed", std::to_string(kTrainSeed), "--out",
                              (dir / "bench.csv").string()});
  if (bench.code != 0) return {false, "bench failed: " + bench.err};
  std::vector<double> col;
  std::istringstream csv(bench.out);
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    col.push_back(std::stod(cells.at(3)));
  }
  const bool monotone = col.size() == 3 && col[0] <= col[1] && col[1] <= col[2];
  return {loss_ok && monotone,
          fmt::format("loss n=4 {:.5f} vs n=1 (36 ch) {:.5f}: {:.1f}% lower (need 5%); bench psnr_enh over 1,2,4 groups: {:.3f}, {:.3f}, "
                      "{:.3f}",
                      four, single.mean_loss, 100.0 * rel, col.size() > 0 ? col[0] : NAN, col.size() > 1 ? col[1] : NAN,
                      col.size() > 2 ? col[2] : NAN)};
}

Outcome overhead_accounting() {
  const Volume x = gen_synthetic(desk_field());
  const auto c = compress(x, make_config(kDeskReb, x));
  FitOptions o;
  o.n_groups = 20;
  o.train.epochs = 1;
  const auto bundle = fit(x, c.decompressed, o);
  const auto archive = parse_archive(encode_archive(c.payload, &bundle, {0, 0}, 0));
  const std::size_t wb = weight_bytes(*archive.bundle);
  const double expect = double(encode_enhancer_blob(bundle).size()) / double(serialize_payload(c.payload).size());
  const bool exact = bundle.trained_count() == 20 && wb == 16640 && overhead_ratio(archive) == expect;

  std::vector<double> ratios;
  for (double reb : {1e-2, 1e-3, 1e-4}) {
    const auto ci = compress(x, make_config(reb, x));
    FitOptions fo;
    fo.n_groups = 4;
    fo.train.epochs = 1;
    const auto b = fit(x, ci.decompressed, fo);
    if (b.trained_count() != 4) return {false, "fixed-size bundle lost a model"};
    ratios.push_back(overhead_ratio(parse_archive(encode_archive(ci.payload, &b, {0, 0}, 0))));
  }
  const bool decreasing = ratios[0] > ratios[1] && ratios[1] > ratios[2];
  return {exact && decreasing, fmt::format("20 models: weight bytes {}, overhead {:.6f} == {:.6f}; 4-model overhead at reb "
                                           "1e-2/1e-3/1e-4: {:.5f} > {:.5f} > {:.5f}",
                                           wb, overhead_ratio(archive), expect, ratios[0], ratios[1], ratios[2])};
}

Outcome format_round_trips() {
  TempDir dir;
  SyntheticSpec s = desk_field();
  s.dims = {16, 16, 16};
  const Volume x = gen_synthetic(s);
  save_raw(x, dir / "x.f32");
  if (!(load_raw(dir / "x.f32", s.dims) == x) || read_file(dir / "x.f32") != encode_raw(x)) return {false, "raw round trip"};
  const auto c = compress(x, make_config(1e-3, x));
  FitOptions o;
  o.n_groups = 20;
  o.train.epochs = 1;
  const auto bundle = fit(x, c.decompressed, o);
  write_archive(dir / "x.gwlz", c.payload, &bundle, {psnr(x, c.decompressed), 0.0}, 0);
  write_sidecar(dir / "x.gwe", bundle, {x.dims(), 0, c.payload.config.abs_bound});
  const auto gwlz = read_file(dir / "x.gwlz");
  const auto gwe = read_file(dir / "x.gwe");
  const auto a = read_archive(dir / "x.gwlz");
  const auto sc = read_sidecar(dir / "x.gwe");
  if (encode_archive(a.payload, &*a.bundle, a.quality, a.axis) != gwlz) return {false, ".gwlz re-encode differs"};
  if (encode_sidecar(sc.bundle, sc.provenance) != gwe) return {false, ".gwe re-encode differs"};
  if (!(decompress(a.payload) == c.decompressed)) return {false, "payload round trip"};

  std::size_t flips = 0;
  for (const auto* file : {&gwlz, &gwe}) {
    for (std::size_t i = 0; i < file->size(); ++i) {
      auto bad = *file;
      bad[i] ^= std::uint8_t(1u << (i % 8));
      try {
        if (file == &gwlz)
          parse_archive(bad);
        else
          parse_sidecar(bad);
        return {false, fmt::format("flip at byte {} not detected", i)};
      } catch (const CorruptionError&) {
        ++flips;
      }
    }
  }
  return {true, fmt::format("raw, .gwlz ({} B) and .gwe ({} B) bit-exact; {} single-byte flips all rejected by CRC", gwlz.size(),
                            gwe.size(), flips)};
}

Outcome clamp_bound() {
  TempDir dir;
  std::mt19937_64 rng(777);
  double worst_ratio = 0.0;
  int clamped_runs = 0;
  for (int t = 0; t < 100; ++t) {
    const Volume x = mixed_volume(rng, 3, 14);
    const auto dims = fmt::format("{}x{}x{}", x.dims()[0], x.dims()[1], x.dims()[2]);
    save_raw(x, dir / "x.f32");
    const double reb = std::pow(10.0, -1.0 - 3.0 * double(rng() % 1000) / 1000.0);
    const double lr = std::pow(10.0, -2.0 + 2.0 * double(rng() % 1000) / 1000.0);  // up to 1: often overshoots
    const auto comp = run_cli({"compress", "--input", (dir / "x.f32").string(), "--dims", dims, "--reb", fmt::format("{}", reb),
                               "--groups", std::to_string(1 + rng() % 4), "--epochs", "3", "--lr", fmt::format("{}", lr), "--seed",
                               std::to_string(t), "--axis", std::to_string(rng() % 3), "--out", (dir / "x.gwlz").string()});
    if (comp.code != 0) return {false, fmt::format("run {}: compress exit {}: {}", t, comp.code, comp.err)};
    const auto dec = run_cli({"decompress", "--input", (dir / "x.gwlz").string(), "--clamp", "bound2e", "--out",
                              (dir / "y.f32").string()});
    if (dec.code != 0) return {false, fmt::format("run {}: decompress exit {}", t, dec.code)};
    const double e = read_archive(dir / "x.gwlz").e_abs;
    const double err = max_abs_diff(x, load_raw(dir / "y.f32", x.dims()));
    if (!(err <= 2.0 * e)) return {false, fmt::format("run {}: max error {} > 2e = {}", t, err, 2.0 * e)};
    if (err > e) ++clamped_runs;
    worst_ratio = std::max(worst_ratio, err / e);
  }
  return {true, fmt::format("100 runs, worst max|x - x^| = {:.4f} e (limit 2e), {} runs beyond e", worst_ratio, clamped_runs)};
}

Outcome determinism() {
  TempDir dir;
  SyntheticSpec s = desk_field();
  s.dims = {24, 24, 24};
  save_raw(gen_synthetic(s), dir / "x.f32");
  std::vector<std::string> reports;
  std::vector<std::vector<std::uint8_t>> archives, outputs;
  for (const char* threads : {"1", "1", "3", "8"}) {
    const auto archive = dir / fmt::format("t{}_{}.gwlz", threads, archives.size());
    const auto r = run_cli({"compress", "--input", (dir / "x.f32").string(), "--dims", "24x24x24", "--reb", "1e-2", "--groups", "6",
                            "--epochs", "4", "--seed", "3", "--threads", threads, "--out", archive.string()});
    if (r.code != 0) return {false, "compress failed: " + r.err};
    const auto out = dir / "y.f32";
    const auto d = run_cli({"decompress", "--input", archive.string(), "--threads", threads, "--out", out.string()});
    if (d.code != 0) return {false, "decompress failed"};
    reports.push_back(r.out + d.out);
    archives.push_back(read_file(archive));
    outputs.push_back(read_file(out));
  }
  for (std::size_t i = 1; i < archives.size(); ++i)
    if (archives[i] != archives[0] || reports[i] != reports[0] || outputs[i] != outputs[0])
      return {false, fmt::format("invocation {} differs", i)};
  return {true, fmt::format("4 invocations (threads 1,1,3,8): archives ({} B), reports and outputs byte-identical", archives[0].size())};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"error-bound guarantee", error_bound},
      {"PSNR oracle", psnr_oracle},
      {"improvement arithmetic", table_arithmetic},
      {"gradient correctness", gradient_correctness},
      {"mask isolation", mask_isolation},
      {"identity safety", identity_safety},
      {"desk-scale enhancement gain", desk_gain},
      {"group-wise benefit", groupwise_benefit},
      {"overhead accounting", overhead_accounting},
      {"format round-trips", format_round_trips},
      {"clamped bound", clamp_bound},
      {"determinism", determinism},
  };
  int failed = 0, n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << fmt::format("[{}] {:2d} {}: {}", o.pass ? "PASS" : "FAIL", n, name, o.detail) << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", n - failed, n) << std::endl;
  return failed == 0 ? 0 : 1;
}
