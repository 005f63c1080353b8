#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include "gwlz/byte_io.hpp"
#include "gwlz/codec.hpp"
#include "gwlz/container.hpp"
#include "gwlz/enhancer.hpp"
#include "gwlz/error.hpp"
#include "gwlz/metrics.hpp"

namespace gwlz::cli {

namespace {

namespace fs = std::filesystem;

struct TrainingFlags {
  std::uint32_t groups = 20;
  std::uint32_t epochs = 300;
  std::uint32_t batch = 10;
  double lr = 1e-3;
  double lr_gamma = 0.5;
  std::uint32_t lr_step = 30;
  std::string strategy = "quantile";
  int axis = 0;
  std::uint64_t seed = 0;
  std::uint32_t channels = kDefaultChannels;
  unsigned threads = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--groups", groups, "Number of value groups")->capture_default_str();
    cmd->add_option("--epochs", epochs, "Training epochs per group")->capture_default_str();
    cmd->add_option("--batch", batch, "Slices per mini-batch")->capture_default_str();
    cmd->add_option("--lr", lr, "Initial learning rate")->capture_default_str();
    cmd->add_option("--lr-gamma", lr_gamma, "Learning-rate decay factor")->capture_default_str();
    cmd->add_option("--lr-step", lr_step, "Epochs between decays")->capture_default_str();
    cmd->add_option("--strategy", strategy, "Grouping strategy")
        ->check(CLI::IsMember({"quantile", "equal-width"}))
        ->capture_default_str();
    cmd->add_option("--axis", axis, "Slicing axis")->check(CLI::Range(0, 2))->capture_default_str();
    cmd->add_option("--seed", seed, "Training seed")->capture_default_str();
    cmd->add_option("--channels", channels, "Hidden channels per enhancer")->capture_default_str();
    cmd->add_option("--threads", threads, "Worker threads for group-level parallelism")->capture_default_str();
  }

  FitOptions fit_options() const {
    FitOptions o;
    o.n_groups = groups;
    o.strategy = parse_group_strategy(strategy);
    o.axis = axis;
    o.threads = std::max(1u, threads);
    o.train.epochs = epochs;
    o.train.batch_size = batch;
    o.train.lr0 = lr;
    o.train.lr_gamma = lr_gamma;
    o.train.lr_step_epochs = lr_step;
    o.train.seed = seed;
    o.train.channels = channels;
    validate(o.train);
    if (groups == 0) throw ConfigError("--groups must be >= 1");
    return o;
  }
};

void print_groups(std::ostream& err, const EnhancerBundle& b) {
  for (std::size_t g = 0; g < b.models.size(); ++g) {
    const auto loss = b.final_loss(g);
    fmt::print(err, "group {}: count={} res_scale={} model={} final_loss={}\n", g, b.stats[g].count,
               format_number(b.stats[g].res_scale), b.models[g] ? "trained" : (b.histories[g].epoch_loss.empty() ? "zero" : "zero (training diverged)"), loss ? format_number(*loss) : "n/a");
  }
}

void write_loss_csv(const fs::path& path, const EnhancerBundle& b) {
  std::ostringstream csv;
  csv << "epoch";
  for (std::size_t g = 0; g < b.histories.size(); ++g) csv << ",group" << g;
  csv << "\n";
  std::size_t epochs = 0;
  for (const auto& h : b.histories) epochs = std::max(epochs, h.epoch_loss.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    csv << e;
    for (const auto& h : b.histories) csv << "," << (e < h.epoch_loss.size() ? format_number(h.epoch_loss[e]) : "");
    csv << "\n";
  }
  const std::string text = csv.str();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// PSNR for reporting only: NaN with a note when the reference is constant.
double reported_psnr(const Volume& x, const Volume& y, std::ostream& err) {
  if (vrange(x) == 0.0f && mse(x, y) > 0.0) {
    fmt::print(err, "note: constant reference with nonzero error, PSNR undefined\n");
    return NAN;
  }
  return psnr(x, y);
}

Volume load_with_dims(const fs::path& path, const Dims& dims) {
  const auto bytes = read_file(path);
  return decode_raw(bytes, dims);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) items.push_back(item);
  if (items.empty()) throw ConfigError(fmt::format("empty list '{}'", text));
  return items;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw ConfigError(fmt::format("'{}' is not a number", s));
  return v;
}

std::uint32_t parse_u32(const std::string& s) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw ConfigError(fmt::format("'{}' is not a non-negative integer", s));
  return static_cast<std::uint32_t>(std::stoul(s));
}

// ---- subcommands ----

struct CompressCmd {
  std::string input, dims, out, loss_csv;
  double reb = 0.0;
  bool no_enhance = false;
  TrainingFlags train;

  int run(std::ostream& out_s, std::ostream& err) const {
    const Volume x = load_with_dims(input, parse_dims(dims));
    const FitOptions opts = train.fit_options();
    const CodecConfig cfg = make_config(reb, x);
    const auto c = compress(x, cfg);
    if (vrange(x) == 0.0f) fmt::print(err, "note: constant input, error bound taken relative to a unit range\n");

    std::optional<EnhancerBundle> bundle;
    Volume enhanced = c.decompressed;
    bool clamp_recommended = false;
    if (!no_enhance) {
      bundle = fit(x, c.decompressed, opts);
      enhanced = enhance(c.decompressed, *bundle, ClampMode::none(), opts.axis, opts.threads);
      clamp_recommended = max_abs_error(x, enhanced) > cfg.abs_bound;
      print_groups(err, *bundle);
      if (!loss_csv.empty()) write_loss_csv(loss_csv, *bundle);
    }
    const QualityRecord quality{reported_psnr(x, c.decompressed, err), reported_psnr(x, enhanced, err)};
    const auto bytes = encode_archive(c.payload, bundle ? &*bundle : nullptr, quality, opts.axis, clamp_recommended);
    write_file(out, bytes);
    const auto archive = parse_archive(bytes);
    out_s << format_report(report(x, c.decompressed, enhanced, archive));
    return kOk;
  }
};

struct DecompressCmd {
  std::string input, out, clamp = "none";
  bool no_enhance = false;
  unsigned threads = 1;

  int run(std::ostream& out_s, std::ostream& err) const {
    const auto archive = read_archive(input);
    const Volume dec = decompress(archive.payload);
    if (!archive.has_enhancer()) {
      fmt::print(err, "note: archive carries no enhancer, writing plain decompressed data\n");
      save_raw(dec, out);
      out_s << "path=plain\n";
      return kOk;
    }
    if (no_enhance) {
      save_raw(dec, out);
      out_s << "path=plain\n";
      return kOk;
    }
    const ClampMode mode = parse_clamp(clamp, archive.e_abs);
    if (archive.clamp_recommended() && mode.kind == ClampMode::Kind::none)
      fmt::print(err, "note: enhanced output exceeded the codec bound at compression time; --clamp bound2e caps it at 2e\n");
    save_raw(enhance(dec, *archive.bundle, mode, archive.axis, std::max(1u, threads)), out);
    out_s << (mode.kind == ClampMode::Kind::none ? "path=enhanced\n" : "path=enhanced-bound2e\n");
    return kOk;
  }
};

struct EnhanceCmd {
  std::string original, decompressed, dims, out;
  double e_abs = 0.0;
  TrainingFlags train;

  int run(std::ostream& out_s, std::ostream& err) const {
    const Dims d = parse_dims(dims);
    if (!(e_abs > 0.0)) throw ConfigError("--e-abs must be > 0");
    const Volume x = load_with_dims(original, d);
    const Volume dec = load_with_dims(decompressed, d);
    const FitOptions opts = train.fit_options();
    const double observed = max_abs_error(x, dec);
    if (observed > e_abs)
      fmt::print(err, "warning: max |original - decompressed| = {} exceeds --e-abs {}\n", format_number(observed),
                 format_number(e_abs));
    const auto bundle = fit(x, dec, opts);
    print_groups(err, bundle);
    write_sidecar(out, bundle, Provenance{d, static_cast<std::uint8_t>(opts.axis), e_abs});
    const Volume enhanced = enhance(dec, bundle, ClampMode::none(), opts.axis, opts.threads);
    const double base = reported_psnr(x, dec, err), enh = reported_psnr(x, enhanced, err);
    const double gain = base == enh ? 0.0 : (std::isfinite(base) && base > 0.0 ? improvement_pct(base, enh) : NAN);
    fmt::print(out_s, "mse={}\npsnr_db={}\nimprovement_pct={}\nmax_abs_err_input={}\n", format_number(mse(x, enhanced)),
               format_number(enh), format_number(gain), format_number(observed));
    return kOk;
  }
};

struct ApplyCmd {
  std::string decompressed, sidecar, out, clamp = "none";
  unsigned threads = 1;

  int run(std::ostream& out_s, std::ostream&) const {
    const Sidecar s = read_sidecar(sidecar);
    const auto bytes = read_file(decompressed);
    if (bytes.size() != 4 * element_count(s.provenance.dims))
      throw DimensionError(fmt::format("sidecar expects {} data ({} bytes), '{}' has {} bytes", to_string(s.provenance.dims),
                                       4 * element_count(s.provenance.dims), decompressed, bytes.size()));
    const Volume dec = decode_raw(bytes, s.provenance.dims);
    save_raw(apply_sidecar(s, dec, parse_clamp(clamp, s.provenance.e_abs), std::max(1u, threads)), out);
    out_s << "path=enhanced\n";
    return kOk;
  }
};

struct StatsCmd {
  std::string original, candidate, dims;

  int run(std::ostream& out_s, std::ostream&) const {
    const Dims d = parse_dims(dims);
    const Volume x = load_with_dims(original, d);
    const Volume y = load_with_dims(candidate, d);
    fmt::print(out_s, "mse={}\npsnr_db={}\nmax_abs_err={}\n", format_number(mse(x, y)), format_number(psnr(x, y)),
               format_number(max_abs_error(x, y)));
    return kOk;
  }
};

void print_bundle(std::ostream& out, const EnhancerBundle& b) {
  fmt::print(out, "n_groups={}\nstrategy={}\nchannels={}\ntrained_models={}\nweight_bytes={}\n", b.spec.n_groups,
             to_string(b.spec.strategy), b.hyper.channels, b.trained_count(), weight_bytes(b));
  for (std::size_t g = 0; g < b.spec.boundaries.size(); ++g) fmt::print(out, "boundary.{}={}\n", g, format_number(b.spec.boundaries[g]));
  for (std::size_t g = 0; g < b.stats.size(); ++g) {
    const auto& s = b.stats[g];
    fmt::print(out, "group.{}=count:{} in_min:{} in_max:{} res_scale:{} model:{}\n", g, s.count, format_number(s.in_min),
               format_number(s.in_max), format_number(s.res_scale), b.models[g] ? "weights" : "zero");
  }
}

struct InspectCmd {
  std::string path;

  int run(std::ostream& out, std::ostream&) const {
    const auto bytes = read_file(path);
    if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "GWLE")) {
      const Sidecar s = parse_sidecar(bytes);
      fmt::print(out, "format=gwe\nversion={}\ndims={}\naxis={}\ne_abs={}\nfile_bytes={}\nenhancer_bytes={}\n", kArchiveVersion,
                 to_string(s.provenance.dims), s.provenance.axis, format_number(s.provenance.e_abs), bytes.size(),
                 s.enhancer_bytes);
      print_bundle(out, s.bundle);
      return kOk;
    }
    const auto a = parse_archive(bytes);
    fmt::print(out,
               "format=gwlz\nversion={}\nflags={}\nhas_enhancer={}\nclamp_recommended={}\ndims={}\nreb={}\ne_abs={}\naxis={}\n"
               "file_bytes={}\npayload_bytes={}\nenhancer_bytes={}\noverhead_ratio={}\ncr={}\npsnr_base_db={}\npsnr_enhanced_db={}\n",
               a.version, a.flags, a.has_enhancer() ? 1 : 0, a.clamp_recommended() ? 1 : 0, to_string(a.dims), format_number(a.reb),
               format_number(a.e_abs), a.axis, a.file_bytes, a.payload_bytes, a.enhancer_bytes, format_number(overhead_ratio(a)),
               format_number(ratio(4 * element_count(a.dims), a.payload_bytes)), format_number(a.quality.psnr_base),
               format_number(a.quality.psnr_enhanced));
    fmt::print(out, "outliers={}\n", a.payload.outliers.size());
    if (a.bundle) print_bundle(out, *a.bundle);
    return kOk;
  }
};

struct GenCmd {
  std::string kind, dims, out;
  std::uint64_t seed = 0;
  float amplitude = 1.0f;

  int run(std::ostream& out_s, std::ostream&) const {
    SyntheticSpec spec;
    spec.kind = parse_synthetic_kind(kind);
    spec.dims = parse_dims(dims);
    spec.seed = seed;
    spec.amplitude = amplitude;
    const auto bytes = save_raw(gen_synthetic(spec), out);
    fmt::print(out_s, "bytes={}\n", bytes);
    return kOk;
  }
};

struct BenchCmd {
  std::string input, dims, rebs, groups_list, out, curves_dir;
  TrainingFlags train;

  int run(std::ostream& out_s, std::ostream& err) const {
    const Volume x = load_with_dims(input, parse_dims(dims));
    std::vector<double> reb_values;
    for (const auto& s : split_list(rebs)) reb_values.push_back(parse_double(s));
    std::vector<std::uint32_t> group_values;
    for (const auto& s : split_list(groups_list)) group_values.push_back(parse_u32(s));
    if (!curves_dir.empty()) fs::create_directories(curves_dir);

    std::ostringstream csv;
    csv << "reb,groups,psnr_base,psnr_enh,improvement_pct,cr,overhead\n";
    for (double reb : reb_values) {
      const auto c = compress(x, make_config(reb, x));
      const double base = reported_psnr(x, c.decompressed, err);
      for (std::uint32_t groups : group_values) {
        TrainingFlags flags = train;
        flags.groups = groups;
        const FitOptions opts = flags.fit_options();
        const auto bundle = fit(x, c.decompressed, opts);
        const Volume enhanced = enhance(c.decompressed, bundle, ClampMode::none(), opts.axis, opts.threads);
        const auto archive = parse_archive(encode_archive(c.payload, &bundle, {base, reported_psnr(x, enhanced, err)}, opts.axis));
        const auto r = report(x, c.decompressed, enhanced, archive);
        csv << format_number(reb) << ',' << groups << ',' << format_number(base) << ',' << format_number(r.psnr) << ','
            << format_number(r.improvement_pct) << ',' << format_number(r.cr) << ',' << format_number(r.overhead) << '\n';
        fmt::print(err, "reb={} groups={} psnr_base={} psnr_enh={}\n", format_number(reb), groups, format_number(base),
                   format_number(r.psnr));
        if (!curves_dir.empty())
          write_loss_csv(fs::path(curves_dir) / fmt::format("loss_reb{}_g{}.csv", format_number(reb), groups), bundle);
      }
    }
    const std::string text = csv.str();
    write_file(out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    out_s << text;
    return kOk;
  }
};

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const RangeError*>(&e)) return kUsage;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const FormatError*>(&e) || dynamic_cast<const DimensionError*>(&e))
    return kData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kIo;
  return kInternal;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Error-bounded compression of FP32 volumes with group-wise learned residual enhancers", "gwlz"};
  app.require_subcommand(1);

  CompressCmd compress_cmd;
  auto* c = app.add_subcommand("compress", "Compress a raw volume into a .gwlz archive");
  c->add_option("--input", compress_cmd.input, "Raw FP32 input")->required();
  c->add_option("--dims", compress_cmd.dims, "Extents NxMxK")->required();
  c->add_option("--reb", compress_cmd.reb, "Relative error bound")->required();
  c->add_option("--out", compress_cmd.out, "Output archive")->required();
  c->add_flag("--no-enhance", compress_cmd.no_enhance, "Skip enhancer training");
  c->add_option("--loss-csv", compress_cmd.loss_csv, "Write per-epoch training losses as CSV");
  compress_cmd.train.attach(c);

  DecompressCmd decompress_cmd;
  auto* d = app.add_subcommand("decompress", "Reconstruct a raw volume from a .gwlz archive");
  d->add_option("--input", decompress_cmd.input, "Archive")->required();
  d->add_option("--out", decompress_cmd.out, "Raw FP32 output")->required();
  d->add_flag("--no-enhance", decompress_cmd.no_enhance, "Write the plain codec output");
  d->add_option("--clamp", decompress_cmd.clamp, "Residual clamping")->check(CLI::IsMember({"none", "bound2e"}))->capture_default_str();
  d->add_option("--threads", decompress_cmd.threads, "Worker threads")->capture_default_str();

  EnhanceCmd enhance_cmd;
  auto* e = app.add_subcommand("enhance", "Fit enhancers for an external compressor's output and write a .gwe sidecar");
  e->add_option("--original", enhance_cmd.original, "Raw FP32 original")->required();
  e->add_option("--decompressed", enhance_cmd.decompressed, "Raw FP32 decompressed data")->required();
  e->add_option("--dims", enhance_cmd.dims, "Extents NxMxK")->required();
  e->add_option("--e-abs", enhance_cmd.e_abs, "Absolute error bound of the external compressor")->required();
  e->add_option("--out", enhance_cmd.out, "Output sidecar")->required();
  enhance_cmd.train.attach(e);

  ApplyCmd apply_cmd;
  auto* a = app.add_subcommand("apply", "Enhance decompressed data with a .gwe sidecar");
  a->add_option("--decompressed", apply_cmd.decompressed, "Raw FP32 decompressed data")->required();
  a->add_option("--sidecar", apply_cmd.sidecar, "Sidecar")->required();
  a->add_option("--out", apply_cmd.out, "Raw FP32 output")->required();
  a->add_option("--clamp", apply_cmd.clamp, "Residual clamping")->check(CLI::IsMember({"none", "bound2e"}))->capture_default_str();
  a->add_option("--threads", apply_cmd.threads, "Worker threads")->capture_default_str();

  StatsCmd stats_cmd;
  auto* s = app.add_subcommand("stats", "Error metrics between two raw volumes");
  s->add_option("--original", stats_cmd.original, "Reference")->required();
  s->add_option("--candidate", stats_cmd.candidate, "Candidate")->required();
  s->add_option("--dims", stats_cmd.dims, "Extents NxMxK")->required();

  InspectCmd inspect_cmd;
  auto* i = app.add_subcommand("inspect", "Describe a .gwlz archive or .gwe sidecar");
  i->add_option("path", inspect_cmd.path, "File")->required();

  GenCmd gen_cmd;
  auto* g = app.add_subcommand("gen", "Write a synthetic test volume");
  g->add_option("--kind", gen_cmd.kind, "constant|cosine-field|gaussian-mixture|skewed-exponential")
      ->required()
      ->check(CLI::IsMember({"constant", "cosine-field", "gaussian-mixture", "skewed-exponential"}));
  g->add_option("--dims", gen_cmd.dims, "Extents NxMxK")->required();
  g->add_option("--seed", gen_cmd.seed, "Seed")->capture_default_str();
  g->add_option("--amplitude", gen_cmd.amplitude, "Amplitude")->capture_default_str();
  g->add_option("--out", gen_cmd.out, "Raw FP32 output")->required();

  BenchCmd bench_cmd;
  auto* b = app.add_subcommand("bench", "Sweep error bounds and group counts, write a CSV report");
  b->add_option("--input", bench_cmd.input, "Raw FP32 input")->required();
  b->add_option("--dims", bench_cmd.dims, "Extents NxMxK")->required();
  b->add_option("--rebs", bench_cmd.rebs, "Comma-separated relative error bounds")->required();
  b->add_option("--groups-list", bench_cmd.groups_list, "Comma-separated group counts")->required();
  b->add_option("--out", bench_cmd.out, "CSV report")->required();
  b->add_option("--curves-dir", bench_cmd.curves_dir, "Directory for per-run loss-curve CSVs");
  bench_cmd.train.attach(b);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << "\n";
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kUsage;
  }

  try {
    if (c->parsed()) return compress_cmd.run(out, err);
    if (d->parsed()) return decompress_cmd.run(out, err);
    if (e->parsed()) return enhance_cmd.run(out, err);
    if (a->parsed()) return apply_cmd.run(out, err);
    if (s->parsed()) return stats_cmd.run(out, err);
    if (i->parsed()) return inspect_cmd.run(out, err);
    if (g->parsed()) return gen_cmd.run(out, err);
    if (b->parsed()) return bench_cmd.run(out, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex);
  }
  return kUsage;
}

}  // namespace gwlz::cli
