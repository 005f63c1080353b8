#include "gwlz/micro_nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/core.h>

#include "gwlz/byte_io.hpp"
#include "gwlz/error.hpp"

namespace gwlz {

namespace {

constexpr std::size_t kTaps = kKernelSize * kKernelSize;

// Offsets of the learnable blocks inside the flat parameter vector.
struct Layout {
  std::size_t C, w1, b1, gamma, beta, w2, b2, total;
  explicit Layout(std::size_t c)
      : C(c), w1(0), b1(9 * c), gamma(10 * c), beta(11 * c), w2(12 * c), b2(21 * c), total(21 * c + 1) {}
};

void check_shape(std::size_t rows, std::size_t cols) {
  if (rows < 3 || cols < 3) throw DimensionError(fmt::format("enhancer input {}x{} is smaller than 3x3", rows, cols));
}

void check_weights(const ModelWeights& w) {
  const std::size_t C = w.channels;
  if (C == 0 || w.conv1_w.size() != 9 * C || w.conv1_b.size() != C || w.bn_gamma.size() != C || w.bn_beta.size() != C ||
      w.bn_running_mean.size() != C || w.bn_running_var.size() != C || w.conv2_w.size() != 9 * C || w.conv2_b.size() != 1)
    throw ConfigError("model weights are inconsistent with their channel count");
}

// out += sum over taps of w[tap] * in shifted by tap, zero padded.
template <class T>
void conv3x3_acc(const T* in, std::size_t H, std::size_t W, const T* w9, T* out) {
  for (int dr = -1; dr <= 1; ++dr) {
    const std::size_t r0 = dr < 0 ? 1 : 0, r1 = dr > 0 ? H - 1 : H;
    for (int dc = -1; dc <= 1; ++dc) {
      const T wt = w9[(dr + 1) * 3 + (dc + 1)];
      const std::size_t c0 = dc < 0 ? 1 : 0, c1 = dc > 0 ? W - 1 : W;
      for (std::size_t r = r0; r < r1; ++r) {
        const T* ip = in + static_cast<std::ptrdiff_t>(r + dr) * static_cast<std::ptrdiff_t>(W) + dc;
        T* op = out + r * W;
        for (std::size_t c = c0; c < c1; ++c) op[c] += wt * ip[c];
      }
    }
  }
}

// g[tap] += sum_p a[p] * b[p + tap], the weight gradient of conv3x3_acc.
template <class T>
void corr3x3_acc(const T* a, const T* b, std::size_t H, std::size_t W, T* g9) {
  for (int dr = -1; dr <= 1; ++dr) {
    const std::size_t r0 = dr < 0 ? 1 : 0, r1 = dr > 0 ? H - 1 : H;
    for (int dc = -1; dc <= 1; ++dc) {
      const std::size_t c0 = dc < 0 ? 1 : 0, c1 = dc > 0 ? W - 1 : W;
      T s = 0.0;
      for (std::size_t r = r0; r < r1; ++r) {
        const T* ap = a + r * W;
        const T* bp = b + static_cast<std::ptrdiff_t>(r + dr) * static_cast<std::ptrdiff_t>(W) + dc;
        for (std::size_t c = c0; c < c1; ++c) s += ap[c] * bp[c];
      }
      g9[(dr + 1) * 3 + (dc + 1)] += s;
    }
  }
}

// out[p + tap] += w[tap] * g[p], the input gradient of conv3x3_acc.
template <class T>
void conv3x3_transpose_acc(const T* g, std::size_t H, std::size_t W, const T* w9, T* out) {
  for (int dr = -1; dr <= 1; ++dr) {
    const std::size_t r0 = dr < 0 ? 1 : 0, r1 = dr > 0 ? H - 1 : H;
    for (int dc = -1; dc <= 1; ++dc) {
      const T wt = w9[(dr + 1) * 3 + (dc + 1)];
      const std::size_t c0 = dc < 0 ? 1 : 0, c1 = dc > 0 ? W - 1 : W;
      for (std::size_t r = r0; r < r1; ++r) {
        const T* gp = g + r * W;
        T* op = out + static_cast<std::ptrdiff_t>(r + dr) * static_cast<std::ptrdiff_t>(W) + dc;
        for (std::size_t c = c0; c < c1; ++c) op[c] += wt * gp[c];
      }
    }
  }
}

template <class T>
struct BatchOutcome {
  T sq_err = 0.0;
  std::size_t mask_count = 0;
  T loss = 0.0;
  std::vector<T> gradient;
  std::vector<T> mean, var;  // biased batch statistics per channel
  std::size_t positions = 0;
};

// Train-mode forward (batch statistics) over a batch, optionally with the
// full backward pass. All arithmetic in T.
template <class T>
BatchOutcome<T> run_batch(std::span<const T> p, std::size_t C, std::span<const MaskedPair* const> batch, bool want_grad,
                          detail::GradFault fault = detail::GradFault::none, std::vector<std::uint8_t>* relu_pattern = nullptr) {
  const Layout L(C);
  BatchOutcome<T> res;
  res.mean.assign(C, 0.0);
  res.var.assign(C, 0.0);

  std::vector<std::vector<T>> inputs(batch.size());
  std::vector<std::vector<T>> xhat(batch.size());
  std::size_t M = 0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& pair = *batch[s];
    const std::size_t H = pair.input.rows, W = pair.input.cols, HW = H * W;
    check_shape(H, W);
    inputs[s].assign(pair.input.values.begin(), pair.input.values.end());
    xhat[s].assign(C * HW, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      T* z = xhat[s].data() + c * HW;
      std::fill(z, z + HW, p[L.b1 + c]);
      conv3x3_acc(inputs[s].data(), H, W, &p[L.w1 + 9 * c], z);
      T acc = 0.0;
      for (std::size_t i = 0; i < HW; ++i) acc += z[i];
      res.mean[c] += acc;
    }
    M += HW;
    res.mask_count += pair.mask_count();
  }
  res.positions = M;
  for (auto& m : res.mean) m /= T(M);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const std::size_t HW = batch[s]->input.values.size();
    for (std::size_t c = 0; c < C; ++c) {
      const T* z = xhat[s].data() + c * HW;
      T acc = 0.0;
      for (std::size_t i = 0; i < HW; ++i) acc += (z[i] - res.mean[c]) * (z[i] - res.mean[c]);
      res.var[c] += acc;
    }
  }
  std::vector<T> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    res.var[c] /= T(M);
    inv_std[c] = 1.0 / std::sqrt(res.var[c] + T(kBnEpsilon));
  }
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const std::size_t HW = batch[s]->input.values.size();
    for (std::size_t c = 0; c < C; ++c) {
      T* z = xhat[s].data() + c * HW;
      for (std::size_t i = 0; i < HW; ++i) z[i] = (z[i] - res.mean[c]) * inv_std[c];
    }
  }

  const T denom = T(std::max<std::size_t>(res.mask_count, 1));
  std::vector<T> grad(want_grad ? L.total : 0, 0.0);
  std::vector<T> A(9 * C, 0.0), Cx(9 * C, 0.0), B(9, 0.0), Sdx(C, 0.0), Sxhat(C, 0.0), Sdy_xhat(C, 0.0);
  std::vector<T> act, out, dout, da, ones;

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& pair = *batch[s];
    const std::size_t H = pair.input.rows, W = pair.input.cols, HW = H * W;
    act.assign(C * HW, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const T g = p[L.gamma + c], b = p[L.beta + c];
      const T* x = xhat[s].data() + c * HW;
      T* a = act.data() + c * HW;
      for (std::size_t i = 0; i < HW; ++i) a[i] = std::max(T(0), g * x[i] + b);
      if (relu_pattern)
        for (std::size_t i = 0; i < HW; ++i) relu_pattern->push_back(g * x[i] + b > T(0));
    }
    out.assign(HW, p[L.b2]);
    for (std::size_t c = 0; c < C; ++c) conv3x3_acc(act.data() + c * HW, H, W, &p[L.w2 + 9 * c], out.data());

    dout.assign(HW, 0.0);
    for (std::size_t i = 0; i < HW; ++i) {
      if (!pair.mask[i]) continue;
      const T d = out[i] - T(pair.target.values[i]);
      res.sq_err += d * d;
      dout[i] = 2.0 * d / denom;
    }
    if (!want_grad) continue;

    for (std::size_t i = 0; i < HW; ++i) grad[L.b2] += dout[i];
    ones.assign(HW, 1.0);
    corr3x3_acc(ones.data(), inputs[s].data(), H, W, B.data());
    for (std::size_t c = 0; c < C; ++c) {
      corr3x3_acc(dout.data(), act.data() + c * HW, H, W, &grad[L.w2 + 9 * c]);
      da.assign(HW, 0.0);
      conv3x3_transpose_acc(dout.data(), H, W, &p[L.w2 + 9 * c], da.data());
      const T g = p[L.gamma + c], b = p[L.beta + c];
      const T* x = xhat[s].data() + c * HW;
      T dg = 0.0, db = 0.0, sx = 0.0;
      // da becomes d(xhat) in place.
      for (std::size_t i = 0; i < HW; ++i) {
        const T dy = (g * x[i] + b > T(0)) ? da[i] : 0.0;
        dg += dy * x[i];
        db += dy;
        sx += x[i];
        da[i] = dy * g;
      }
      grad[L.gamma + c] += dg;
      grad[L.beta + c] += db;
      Sxhat[c] += sx;
      T sdx = 0.0;
      for (std::size_t i = 0; i < HW; ++i) sdx += da[i];
      Sdx[c] += sdx;
      corr3x3_acc(da.data(), inputs[s].data(), H, W, &A[9 * c]);
      corr3x3_acc(x, inputs[s].data(), H, W, &Cx[9 * c]);
    }
  }
  res.loss = res.sq_err / denom;
  if (!want_grad) return res;

  // Batch-norm backward folded into the conv1 weight gradient:
  // dz = k (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)).
  const T sign = fault == detail::GradFault::negate_conv1 ? T(-1) : T(1);
  for (std::size_t c = 0; c < C; ++c) {
    const T m1 = Sdx[c] / T(M);
    const T m2 = p[L.gamma + c] * grad[L.gamma + c] / T(M);
    const T k = inv_std[c];
    for (std::size_t t = 0; t < kTaps; ++t) grad[L.w1 + 9 * c + t] = sign * k * (A[9 * c + t] - m1 * B[t] - m2 * Cx[9 * c + t]);
    grad[L.b1 + c] = sign * k * (Sdx[c] - T(M) * m1 - m2 * Sxhat[c]);
  }
  res.gradient = std::move(grad);
  return res;
}

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

void fold_running_stats(ModelWeights& w, const BatchOutcome<double>& b, double momentum) {
  const double unbias = b.positions > 1 ? double(b.positions) / double(b.positions - 1) : 1.0;
  for (std::size_t c = 0; c < w.channels; ++c) {
    w.bn_running_mean[c] = static_cast<float>((1.0 - momentum) * w.bn_running_mean[c] + momentum * b.mean[c]);
    w.bn_running_var[c] = static_cast<float>((1.0 - momentum) * w.bn_running_var[c] + momentum * b.var[c] * unbias);
  }
}

double normal(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

std::size_t param_count(std::uint32_t channels) { return Layout(channels).total; }
std::size_t param_count(const ModelWeights& w) { return param_count(w.channels); }
std::size_t state_count(std::uint32_t channels) { return param_count(channels) + 2 * std::size_t{channels}; }
std::size_t weight_blob_size(std::uint32_t channels) { return 4 * state_count(channels); }

std::vector<double> flatten_params(const ModelWeights& w) {
  check_weights(w);
  std::vector<double> flat;
  flat.reserve(param_count(w));
  for (const auto* v : {&w.conv1_w, &w.conv1_b, &w.bn_gamma, &w.bn_beta, &w.conv2_w, &w.conv2_b})
    flat.insert(flat.end(), v->begin(), v->end());
  return flat;
}

void assign_params(ModelWeights& w, std::span<const double> flat) {
  check_weights(w);
  if (flat.size() != param_count(w)) throw ConfigError("flat parameter vector has the wrong length");
  std::size_t off = 0;
  for (auto* v : {&w.conv1_w, &w.conv1_b, &w.bn_gamma, &w.bn_beta, &w.conv2_w, &w.conv2_b})
    for (auto& x : *v) x = static_cast<float>(flat[off++]);
}

ModelWeights init_model(std::uint64_t seed, std::uint32_t channels) {
  if (channels == 0 || channels > 255) throw ConfigError("channel count must be in [1, 255]");
  ModelWeights w;
  w.channels = channels;
  std::mt19937_64 rng(seed);
  const double std_dev = std::sqrt(2.0 / double(kTaps));
  w.conv1_w.resize(9 * channels);
  for (auto& x : w.conv1_w) x = static_cast<float>(std_dev * normal(rng));
  w.conv1_b.assign(channels, 0.0f);
  w.bn_gamma.assign(channels, 1.0f);
  w.bn_beta.assign(channels, 0.0f);
  w.bn_running_mean.assign(channels, 0.0f);
  w.bn_running_var.assign(channels, 1.0f);
  w.conv2_w.assign(9 * channels, 0.0f);
  w.conv2_b.assign(1, 0.0f);
  return w;
}

Plane forward(ModelWeights& w, const Plane& input, ForwardMode mode, double momentum) {
  if (mode == ForwardMode::eval) return forward(static_cast<const ModelWeights&>(w), input);
  check_weights(w);
  MaskedPair pair;
  pair.input = input;
  pair.target = {input.rows, input.cols, std::vector<float>(input.values.size(), 0.0f)};
  pair.mask.assign(input.values.size(), 0);
  const MaskedPair* ptr = &pair;
  const auto flat = flatten_params(w);
  const auto stats = run_batch<double>(flat, w.channels, std::span(&ptr, 1), false);

  // Recompute the output with the batch statistics.
  const std::size_t C = w.channels, H = input.rows, W = input.cols, HW = H * W;
  const std::vector<double> in(input.values.begin(), input.values.end());
  const auto w1 = to_double(w.conv1_w), w2 = to_double(w.conv2_w);
  std::vector<double> out(HW, w.conv2_b[0]), z(HW);
  for (std::size_t c = 0; c < C; ++c) {
    std::fill(z.begin(), z.end(), double(w.conv1_b[c]));
    conv3x3_acc(in.data(), H, W, &w1[9 * c], z.data());
    const double k = 1.0 / std::sqrt(stats.var[c] + kBnEpsilon);
    for (auto& v : z) v = std::max(0.0, double(w.bn_gamma[c]) * (v - stats.mean[c]) * k + double(w.bn_beta[c]));
    conv3x3_acc(z.data(), H, W, &w2[9 * c], out.data());
  }
  fold_running_stats(w, stats, momentum);
  Plane result{H, W, std::vector<float>(HW)};
  for (std::size_t i = 0; i < HW; ++i) result.values[i] = static_cast<float>(out[i]);
  return result;
}

Plane forward(const ModelWeights& w, const Plane& input) {
  check_weights(w);
  check_shape(input.rows, input.cols);
  const std::size_t C = w.channels, H = input.rows, W = input.cols, HW = H * W;
  const std::vector<double> in(input.values.begin(), input.values.end());
  const auto w1 = to_double(w.conv1_w), w2 = to_double(w.conv2_w);
  std::vector<double> out(HW, w.conv2_b[0]), z(HW);
  for (std::size_t c = 0; c < C; ++c) {
    std::fill(z.begin(), z.end(), double(w.conv1_b[c]));
    conv3x3_acc(in.data(), H, W, &w1[9 * c], z.data());
    const double k = 1.0 / std::sqrt(double(w.bn_running_var[c]) + kBnEpsilon);
    const double g = w.bn_gamma[c], b = w.bn_beta[c], m = w.bn_running_mean[c];
    for (auto& v : z) v = std::max(0.0, g * (v - m) * k + b);
    conv3x3_acc(z.data(), H, W, &w2[9 * c], out.data());
  }
  Plane result{H, W, std::vector<float>(HW)};
  for (std::size_t i = 0; i < HW; ++i) result.values[i] = static_cast<float>(out[i]);
  return result;
}

double masked_mse(const Plane& pred, const Plane& target, std::span<const std::uint8_t> mask) {
  if (pred.values.size() != target.values.size() || mask.size() != pred.values.size())
    throw DimensionError("masked_mse operands differ in shape");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = double(pred.values[i]) - double(target.values[i]);
    acc += d * d;
    ++n;
  }
  return acc / double(std::max<std::size_t>(n, 1));
}

LossAndGradient masked_loss_and_gradient(const ModelWeights& w, std::span<const MaskedPair> batch) {
  std::vector<const MaskedPair*> ptrs;
  for (const auto& p : batch) ptrs.push_back(&p);
  auto r = run_batch<double>(flatten_params(w), w.channels, ptrs, true);
  return {r.loss, std::move(r.gradient)};
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(cfg.lr0 > 0.0) || !std::isfinite(cfg.lr0)) throw ConfigError("learning rate must be > 0");
  if (!(cfg.lr_gamma > 0.0 && cfg.lr_gamma <= 1.0)) throw ConfigError("lr gamma must be in (0, 1]");
  if (cfg.lr_step_epochs == 0) throw ConfigError("lr step must be >= 1 epoch");
  if (!(cfg.bn_momentum > 0.0 && cfg.bn_momentum <= 1.0)) throw ConfigError("batch-norm momentum must be in (0, 1]");
  if (cfg.channels == 0 || cfg.channels > 255) throw ConfigError("channel count must be in [1, 255]");
}

double learning_rate(const TrainConfig& cfg, std::uint32_t epoch) {
  return cfg.lr0 * std::pow(cfg.lr_gamma, double(epoch / cfg.lr_step_epochs));
}

std::optional<TrainResult> train_group(std::span<const MaskedPair> pairs, const TrainConfig& cfg) {
  validate(cfg);
  std::vector<const MaskedPair*> usable;
  for (const auto& p : pairs)
    if (p.mask_count() > 0) usable.push_back(&p);
  if (usable.empty()) return std::nullopt;

  TrainResult result{init_model(cfg.seed, cfg.channels), {}};
  ModelWeights& w = result.weights;
  result.history.epoch_loss.reserve(cfg.epochs);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(usable.size());
  std::vector<const MaskedPair*> batch;
  batch.reserve(cfg.batch_size);

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i-- > 1;) std::swap(order[i], order[rng() % (i + 1)]);

    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(usable[order[i]]);
      auto flat = flatten_params(w);
      const auto out = run_batch<double>(flat, w.channels, batch, true);
      sq += out.sq_err;
      count += out.mask_count;
      for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= lr * out.gradient[i];
      assign_params(w, flat);
      fold_running_stats(w, out, cfg.bn_momentum);
    }
    result.history.epoch_loss.push_back(sq / double(std::max<std::size_t>(count, 1)));
  }
  return result;
}

namespace detail {

double grad_check(const ModelWeights& w, const MaskedPair& pair, double epsilon, GradFault fault) {
  const MaskedPair* ptr = &pair;
  const std::span<const MaskedPair* const> batch(&ptr, 1);
  // Extended precision keeps the central differences well above roundoff,
  // which matters for parameters whose true gradient is zero.
  using Wide = long double;
  const auto flat = flatten_params(w);
  std::vector<Wide> params(flat.begin(), flat.end());
  std::vector<std::uint8_t> pattern, probe;
  const auto analytic = run_batch<Wide>(params, w.channels, batch, true, fault, &pattern).gradient;
  auto loss_at = [&](std::size_t i, Wide value) {
    const Wide saved = params[i];
    params[i] = value;
    probe.clear();
    const Wide loss = run_batch<Wide>(params, w.channels, batch, false, GradFault::none, &probe).loss;
    params[i] = saved;
    return std::pair{loss, probe == pattern};
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    // A step that flips a ReLU measures a secant across the kink, not the
    // derivative; shrink it until both sides keep the activation pattern.
    Wide eps = epsilon;
    Wide numeric_w = 0;
    for (int attempt = 0; attempt < 4; ++attempt, eps /= 10) {
      const auto [up, same_up] = loss_at(i, params[i] + eps);
      const auto [down, same_down] = loss_at(i, params[i] - eps);
      numeric_w = (up - down) / (2 * eps);
      if (same_up && same_down) break;
    }
    const double numeric = static_cast<double>(numeric_w);
    const double a = static_cast<double>(analytic[i]);
    const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / scale);
  }
  return worst;
}

}  // namespace detail

double grad_check(const ModelWeights& w, const MaskedPair& pair, double epsilon) {
  return detail::grad_check(w, pair, epsilon, detail::GradFault::none);
}

std::vector<std::uint8_t> serialize_weights(const ModelWeights& w) {
  check_weights(w);
  ByteWriter out;
  for (const auto* v : {&w.conv1_w, &w.conv1_b, &w.bn_gamma, &w.bn_beta, &w.bn_running_mean, &w.bn_running_var, &w.conv2_w,
                        &w.conv2_b})
    for (float x : *v) out.put_f32(x);
  return out.take();
}

ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes, std::uint32_t channels) {
  if (channels == 0 || channels > 255) throw FormatError("channel count must be in [1, 255]");
  if (bytes.size() != weight_blob_size(channels))
    throw FormatError(fmt::format("weight blob must be {} bytes, got {}", weight_blob_size(channels), bytes.size()));
  ModelWeights w;
  w.channels = channels;
  const std::size_t C = channels;
  ByteReader r(bytes);
  auto fill = [&](std::vector<float>& v, std::size_t n) {
    v.resize(n);
    for (auto& x : v) {
      x = r.get_f32();
      if (!std::isfinite(x)) throw FormatError("non-finite value in weight blob");
    }
  };
  fill(w.conv1_w, 9 * C);
  fill(w.conv1_b, C);
  fill(w.bn_gamma, C);
  fill(w.bn_beta, C);
  fill(w.bn_running_mean, C);
  fill(w.bn_running_var, C);
  fill(w.conv2_w, 9 * C);
  fill(w.conv2_b, 1);
  for (float v : w.bn_running_var)
    if (v < 0.0f) throw FormatError("negative running variance in weight blob");
  return w;
}

}  // namespace gwlz
