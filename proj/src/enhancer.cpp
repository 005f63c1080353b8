#include "gwlz/enhancer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/core.h>

#include "gwlz/error.hpp"

namespace gwlz {

namespace {

// Runs task(g) for g in [0, n) on up to `threads` workers. Tasks write to
// disjoint outputs, so scheduling cannot change results.
template <class Task>
void for_each_group(std::size_t n, unsigned threads, Task&& task) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t g = 0; g < n; ++g) task(g);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      for (std::size_t g; (g = next.fetch_add(1)) < n;) {
        try {
          task(g);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::uint32_t> group_ids(const Volume& v, const GroupSpec& spec) {
  std::vector<std::uint32_t> ids(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) ids[i] = assign(v[i], spec);
  return ids;
}

void check_axis(int axis) {
  if (axis < 0 || axis > 2) throw ConfigError(fmt::format("slice axis {} out of range [0, 2]", axis));
}

}  // namespace

std::size_t EnhancerBundle::trained_count() const {
  return static_cast<std::size_t>(std::count_if(models.begin(), models.end(), [](const auto& m) { return m.has_value(); }));
}

std::optional<double> EnhancerBundle::final_loss(std::size_t g) const {
  if (g >= histories.size() || histories[g].epoch_loss.empty() || !models[g]) return std::nullopt;
  return histories[g].epoch_loss.back();
}

double EnhancerBundle::mean_final_loss() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t g = 0; g < models.size(); ++g)
    if (auto l = final_loss(g)) {
      sum += *l;
      ++n;
    }
  return n ? sum / double(n) : 0.0;
}

ClampMode ClampMode::bound2e(double e_abs) {
  if (!(e_abs > 0.0) || !std::isfinite(e_abs)) throw ConfigError("bound2e clamping needs e_abs > 0");
  return {Kind::bound2e, e_abs};
}

ClampMode parse_clamp(const std::string& name, double e_abs) {
  if (name == "none") return ClampMode::none();
  if (name == "bound2e") return ClampMode::bound2e(e_abs);
  throw ConfigError(fmt::format("unknown clamp mode '{}'", name));
}

namespace {

bool finite_model(const ModelWeights& w) {
  for (const auto* v : {&w.conv1_w, &w.conv1_b, &w.bn_gamma, &w.bn_beta, &w.bn_running_mean, &w.bn_running_var, &w.conv2_w,
                        &w.conv2_b})
    for (float x : *v)
      if (!std::isfinite(x)) return false;
  return true;
}

// Finite weights can still overflow binary32 at inference, so check the scaled predictions too.
bool finite_predictions(const ModelWeights& w, const std::vector<MaskedPair>& pairs, double scale) {
  for (const auto& p : pairs)
    for (float y : forward(w, p.input).values)
      if (!std::isfinite(static_cast<float>(double(y) * scale))) return false;
  return true;
}

}  // namespace

EnhancerBundle zero_bundle(const GroupSpec& spec, const GroupStats& stats) {
  EnhancerBundle b;
  b.spec = spec;
  b.stats = stats;
  b.models.assign(spec.n_groups, std::nullopt);
  b.histories.assign(spec.n_groups, {});
  return b;
}

EnhancerBundle fit(const Volume& original, const Volume& decompressed, const FitOptions& opts) {
  check_axis(opts.axis);
  validate(opts.train);
  if (original.dims() != decompressed.dims())
    throw DimensionError(fmt::format("original {} and decompressed {} differ in shape", to_string(original.dims()),
                                     to_string(decompressed.dims())));
  const Dims& dims = decompressed.dims();
  const auto [rows, cols] = slice_shape(dims, opts.axis);
  if (rows < 3 || cols < 3)
    throw DimensionError(fmt::format("slices of {} along axis {} are {}x{}, enhancers need at least 3x3", to_string(dims),
                                     opts.axis, rows, cols));
  const Volume res = residual(original, decompressed);
  const GroupSpec spec = build_spec(decompressed, opts.n_groups, opts.strategy);
  const GroupStats stats = compute_stats_from_residual(decompressed, res, spec);

  EnhancerBundle bundle = zero_bundle(spec, stats);
  bundle.hyper.channels = static_cast<std::uint8_t>(opts.train.channels);
  bundle.train = opts.train;

  std::vector<std::uint32_t> trainable;
  for (std::uint32_t g = 0; g < spec.n_groups; ++g)
    if (stats[g].count >= opts.min_group_count && stats[g].res_scale > 0.0f) trainable.push_back(g);
  if (trainable.empty()) return bundle;

  const std::size_t n_slices = dims[static_cast<std::size_t>(opts.axis)];
  std::vector<Plane> dec_slices, res_slices;
  dec_slices.reserve(n_slices);
  res_slices.reserve(n_slices);
  for (std::size_t s = 0; s < n_slices; ++s) {
    dec_slices.push_back(get_slice(decompressed, opts.axis, s));
    res_slices.push_back(get_slice(res, opts.axis, s));
  }

  for_each_group(trainable.size(), opts.threads, [&](std::size_t t) {
    const std::uint32_t g = trainable[t];
    std::vector<MaskedPair> pairs;
    for (std::size_t s = 0; s < n_slices; ++s) {
      auto pair = masked_pair(dec_slices[s], res_slices[s], g, spec, stats[g]);
      if (pair.mask_count() > 0) pairs.push_back(std::move(pair));
    }
    TrainConfig cfg = opts.train;
    cfg.seed = opts.train.seed ^ g;
    if (auto result = train_group(pairs, cfg)) {
      // A diverged model (non-finite loss, weights or predictions) falls back to identity.
      if (finite_model(result->weights) && std::isfinite(result->history.epoch_loss.back()) &&
          finite_predictions(result->weights, pairs, stats[g].res_scale))
        bundle.models[g] = std::move(result->weights);
      bundle.histories[g] = std::move(result->history);
    }
  });
  return bundle;
}

Volume predict_residual(const EnhancerBundle& bundle, const Volume& decompressed, int axis, unsigned threads) {
  check_axis(axis);
  if (bundle.models.size() != bundle.spec.n_groups || bundle.stats.size() != bundle.spec.n_groups)
    throw ConfigError("enhancer bundle is inconsistent with its group count");
  std::uint64_t total = 0;
  for (const auto& s : bundle.stats) total += s.count;
  if (total != decompressed.size())
    throw DimensionError(fmt::format("bundle was fit on {} elements, volume has {}", total, decompressed.size()));

  std::vector<float> out(decompressed.size(), 0.0f);
  if (bundle.trained_count() == 0) return Volume(decompressed.dims(), std::move(out));

  const Dims& dims = decompressed.dims();
  const auto ids = group_ids(decompressed, bundle.spec);
  const std::size_t n_slices = dims[static_cast<std::size_t>(axis)];
  std::vector<std::uint32_t> active;
  for (std::uint32_t g = 0; g < bundle.spec.n_groups; ++g)
    if (bundle.models[g] && bundle.stats[g].res_scale > 0.0f) active.push_back(g);

  // Each element belongs to one group, so workers write disjoint entries.
  for_each_group(active.size(), threads, [&](std::size_t t) {
    const std::uint32_t g = active[t];
    const auto& model = *bundle.models[g];
    const auto& stat = bundle.stats[g];
    const double scale = stat.res_scale;
    for (std::size_t s = 0; s < n_slices; ++s) {
      const auto idx = slice_indices(dims, axis, s);
      const auto [rows, cols] = slice_shape(dims, axis);
      Plane input{rows, cols, std::vector<float>(idx.size(), 0.0f)};
      bool any = false;
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (ids[idx[i]] == g) {
          input.values[i] = normalize_input(decompressed[idx[i]], stat);
          any = true;
        }
      if (!any) continue;
      const Plane pred = forward(model, input);
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (ids[idx[i]] == g) out[idx[i]] = static_cast<float>(double(pred.values[i]) * scale);
    }
  });
  return Volume(dims, std::move(out));
}

Volume apply_residual(const Volume& decompressed, const Volume& res, const ClampMode& clamp) {
  if (decompressed.dims() != res.dims()) throw DimensionError("residual and decompressed volumes differ in shape");
  std::vector<float> out(decompressed.size());
  const bool bounded = clamp.kind == ClampMode::Kind::bound2e;
  const double e = clamp.e_abs;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double base = decompressed[i];
    double r = res[i];
    if (bounded) r = std::clamp(r, -e, e);
    float v = static_cast<float>(base + r);
    if (bounded) {
      // Rounding to binary32 may overshoot the clamp; step back toward the base value.
      while (std::abs(double(v) - base) > e) v = std::nextafter(v, static_cast<float>(base));
    }
    out[i] = v;
  }
  return Volume(decompressed.dims(), std::move(out));
}

Volume enhance(const Volume& decompressed, const EnhancerBundle& bundle, const ClampMode& clamp, int axis, unsigned threads) {
  return apply_residual(decompressed, predict_residual(bundle, decompressed, axis, threads), clamp);
}

}  // namespace gwlz
