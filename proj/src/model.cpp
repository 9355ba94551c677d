#include "atbseg/model.hpp"

#include <cmath>
#include <numeric>

#include "atbseg/random.hpp"
#include "nn_ops.hpp"

namespace atbseg {

std::string to_string(Architecture a) { return a == Architecture::UNetStyle ? "unet-style" : "segnet-style"; }

Architecture parse_architecture(std::string_view name) {
  if (name == "segnet-style" || name == "segnet") return Architecture::SegNetStyle;
  if (name == "unet-style" || name == "unet") return Architecture::UNetStyle;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

namespace {
int round_up(int v, int multiple) { return (v + multiple - 1) / multiple * multiple; }
}  // namespace

void ModelConfig::validate() const {
  if (stages < 2 || stages > 5) throw ConfigError("stages must be in [2, 5]");
  if (base_channels < 4) throw ConfigError("base_channels must be >= 4");
  if (kernel_size != 3) throw ConfigError("only kernel_size 3 is supported");
  if (pool_factor != 2) throw ConfigError("only pool_factor 2 is supported");
  const int div = 1 << stages;
  if (input_width < div || input_height < div) throw ConfigError("input smaller than the encoder's total stride");
  if (!auto_pad && (input_width % div != 0 || input_height % div != 0)) {
    throw ConfigError("input " + std::to_string(input_width) + "x" + std::to_string(input_height) +
                      " is not divisible by " + std::to_string(div) + " (pool_factor^stages); enable auto_pad");
  }
}

int ModelConfig::padded_width() const { return auto_pad ? round_up(input_width, 1 << stages) : input_width; }
int ModelConfig::padded_height() const { return auto_pad ? round_up(input_height, 1 << stages) : input_height; }

std::size_t ParameterInfo::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

template <typename T>
struct Network<T>::UnitCache {
  nn::Tensor4<T> in;
  nn::Tensor4<T> xhat;
  std::vector<T> inv_std;
  nn::Tensor4<T> out;
};

template <typename T>
struct Network<T>::Cache {
  struct HeadCache {
    std::vector<nn::Tensor4<T>> up_in;
    std::vector<std::array<UnitCache, 2>> dec;
    nn::Tensor4<T> out_in;
  };
  std::vector<std::array<UnitCache, 2>> enc;
  std::vector<std::vector<std::size_t>> argmax;
  nn::Tensor4<T> bottleneck;
  std::array<HeadCache, 3> heads;
};

template <typename T>
int Network<T>::add_param(std::string name, std::vector<int> shape) {
  ParameterInfo pi{std::move(name), std::move(shape)};
  params_.emplace_back(pi.size(), T(0));
  info_.push_back(std::move(pi));
  return static_cast<int>(params_.size()) - 1;
}

template <typename T>
typename Network<T>::Conv Network<T>::make_conv(const std::string& name, int in_ch, int out_ch, int kernel,
                                                bool bias) {
  Conv c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kernel = kernel;
  if (kernel == 2) {
    c.weight = add_param(name + ".weight", {out_ch, 2, 2, in_ch});
  } else {
    c.weight = add_param(name + ".weight", {out_ch, in_ch, kernel, kernel});
  }
  if (bias) c.bias = add_param(name + ".bias", {out_ch});
  return c;
}

template <typename T>
typename Network<T>::Norm Network<T>::make_norm(const std::string& name, int channels) {
  Norm n;
  n.channels = channels;
  n.gamma = add_param(name + ".gamma", {channels});
  n.beta = add_param(name + ".beta", {channels});
  params_[n.gamma].assign(static_cast<std::size_t>(channels), T(1));
  n.running = static_cast<int>(buffers_.size());
  buffers_.emplace_back(static_cast<std::size_t>(channels), T(0));
  buffers_.emplace_back(static_cast<std::size_t>(channels), T(1));
  return n;
}

template <typename T>
typename Network<T>::Unit Network<T>::make_unit(const std::string& name, int in_ch, int out_ch) {
  Unit u;
  u.conv = make_conv(name + ".conv", in_ch, out_ch, 3, false);
  u.norm = make_norm(name + ".norm", out_ch);
  return u;
}

template <typename T>
Network<T>::Network(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int stages = config_.stages;
  auto ch = [&](int s) { return config_.base_channels << s; };
  const bool unet = config_.variant == Architecture::UNetStyle;

  for (int s = 0; s < stages; ++s) {
    const auto prefix = "enc" + std::to_string(s);
    const int in = s == 0 ? 1 : ch(s - 1);
    encoder_.push_back({make_unit(prefix + ".a", in, ch(s)), make_unit(prefix + ".b", ch(s), ch(s))});
  }
  for (int h = 0; h < 3; ++h) {
    auto& head = heads_[h];
    head.stages.resize(static_cast<std::size_t>(stages));
    const auto prefix = "head" + std::to_string(h + 1);
    for (int s = stages - 1; s >= 0; --s) {
      const auto sp = prefix + ".dec" + std::to_string(s);
      auto& st = head.stages[s];
      const int from = s == stages - 1 ? ch(stages - 1) : ch(s + 1);
      st.up = make_conv(sp + ".up", from, ch(s), 2, false);
      st.a = make_unit(sp + ".a", unet ? 2 * ch(s) : ch(s), ch(s));
      st.b = make_unit(sp + ".b", ch(s), ch(s));
    }
    head.out = make_conv(prefix + ".out", ch(0), 2, 1, true);
  }

  // He-uniform on fan-in for every weight tensor; normalization scales 1, shifts and biases 0.
  Rng rng(config_.seed);
  for (std::size_t i = 0; i < info_.size(); ++i) {
    const auto& pi = info_[i];
    if (!pi.name.ends_with(".weight")) continue;
    int fan_in;
    if (pi.name.ends_with(".up.weight")) {
      fan_in = pi.shape[3];
    } else {
      fan_in = pi.shape[1] * pi.shape[2] * pi.shape[3];
    }
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : params_[i]) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename T>
nn::Tensor4<T> Network<T>::unit_forward(const nn::Tensor4<T>& in, const Unit& u, bool training, UnitCache* cache,
                                        BatchStatistics* stats) const {
  auto y = nn::conv_forward(in, params_[u.conv.weight], static_cast<const std::vector<T>*>(nullptr), u.conv.out_ch, 3);
  const auto& gamma = params_[u.norm.gamma];
  const auto& beta = params_[u.norm.beta];
  const std::size_t plane = y.plane();
  const double count = static_cast<double>(plane) * y.n;
  if (cache) {
    cache->in = in;
    cache->xhat = nn::Tensor4<T>(y.n, y.c, y.h, y.w);
    cache->inv_std.assign(static_cast<std::size_t>(y.c), T(0));
  }
  for (int c = 0; c < y.c; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (int i = 0; i < y.n; ++i) {
        const T* p = y.channel(i, c);
        for (std::size_t k = 0; k < plane; ++k) sum += p[k];
      }
      mean = sum / count;
      double sq = 0.0;
      for (int i = 0; i < y.n; ++i) {
        const T* p = y.channel(i, c);
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = p[k] - mean;
          sq += d * d;
        }
      }
      var = sq / count;
      if (stats) {
        const int ordinal = u.norm.running / 2;
        stats->mean[ordinal][c] = static_cast<T>(mean);
        stats->var[ordinal][c] = static_cast<T>(count > 1 ? var * count / (count - 1) : var);
      }
    } else {
      mean = buffers_[u.norm.running][c];
      var = buffers_[u.norm.running + 1][c];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEpsilon));
    const T m = static_cast<T>(mean);
    if (cache) cache->inv_std[c] = inv;
    for (int i = 0; i < y.n; ++i) {
      T* p = y.channel(i, c);
      T* xh = cache ? cache->xhat.channel(i, c) : nullptr;
      for (std::size_t k = 0; k < plane; ++k) {
        const T normalized = (p[k] - m) * inv;
        if (xh) xh[k] = normalized;
        const T v = gamma[c] * normalized + beta[c];
        p[k] = v > T(0) ? v : T(0);
      }
    }
  }
  if (cache) cache->out = y;
  return y;
}

template <typename T>
nn::Tensor4<T> Network<T>::unit_backward(const nn::Tensor4<T>& dout, const Unit& u, const UnitCache& cache,
                                         std::vector<std::vector<T>>& grads, bool need_input_grad) const {
  nn::Tensor4<T> dy = dout;
  for (std::size_t k = 0; k < dy.size(); ++k) {
    if (!(cache.out.data[k] > T(0))) dy.data[k] = T(0);
  }
  const auto& gamma = params_[u.norm.gamma];
  auto& dgamma = grads[u.norm.gamma];
  auto& dbeta = grads[u.norm.beta];
  const std::size_t plane = dy.plane();
  const double count = static_cast<double>(plane) * dy.n;
  for (int c = 0; c < dy.c; ++c) {
    double sg = 0.0, sb = 0.0;
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.channel(i, c);
      const T* xh = cache.xhat.channel(i, c);
      for (std::size_t k = 0; k < plane; ++k) {
        sg += static_cast<double>(d[k]) * xh[k];
        sb += d[k];
      }
    }
    dgamma[c] += static_cast<T>(sg);
    dbeta[c] += static_cast<T>(sb);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c] / count;
    for (int i = 0; i < dy.n; ++i) {
      T* d = dy.channel(i, c);
      const T* xh = cache.xhat.channel(i, c);
      for (std::size_t k = 0; k < plane; ++k) {
        d[k] = static_cast<T>(scale * (count * d[k] - sb - xh[k] * sg));
      }
    }
  }
  return nn::conv_backward(cache.in, dy, params_[u.conv.weight], 3, grads[u.conv.weight],
                           static_cast<std::vector<T>*>(nullptr), need_input_grad);
}

namespace {

template <typename T>
nn::Tensor4<T> reflect_pad(const nn::Tensor4<T>& in, int out_h, int out_w) {
  if (in.h == out_h && in.w == out_w) return in;
  nn::Tensor4<T> out(in.n, in.c, out_h, out_w);
  const int top = (out_h - in.h) / 2;
  const int left = (out_w - in.w) / 2;
  auto reflect = [](int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  for (int i = 0; i < in.n; ++i) {
    for (int c = 0; c < in.c; ++c) {
      for (int y = 0; y < out_h; ++y) {
        const int sy = reflect(y - top, in.h);
        for (int x = 0; x < out_w; ++x) out.at(i, c, y, x) = in.at(i, c, sy, reflect(x - left, in.w));
      }
    }
  }
  return out;
}

template <typename T>
T sigmoid(T d) {
  if (d >= T(0)) return T(1) / (T(1) + std::exp(-d));
  const T e = std::exp(d);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
nn::Tensor4<T> Network<T>::run(const nn::Tensor4<T>& input, bool training, Cache* cache,
                               BatchStatistics* stats) const {
  if (input.c != 1 || input.h != config_.input_height || input.w != config_.input_width) {
    throw ShapeError("network input must be [N,1," + std::to_string(config_.input_height) + "," +
                     std::to_string(config_.input_width) + "]");
  }
  const int stages = config_.stages;
  const bool unet = config_.variant == Architecture::UNetStyle;
  if (stats) {
    const std::size_t layers = buffers_.size() / 2;
    stats->mean.assign(layers, {});
    stats->var.assign(layers, {});
    for (std::size_t l = 0; l < layers; ++l) {
      stats->mean[l].assign(buffers_[2 * l].size(), T(0));
      stats->var[l].assign(buffers_[2 * l].size(), T(0));
    }
  }
  if (cache) {
    cache->enc.resize(static_cast<std::size_t>(stages));
    cache->argmax.resize(static_cast<std::size_t>(stages));
    for (auto& hc : cache->heads) {
      hc.up_in.resize(static_cast<std::size_t>(stages));
      hc.dec.resize(static_cast<std::size_t>(stages));
    }
  }

  auto x = reflect_pad(input, config_.padded_height(), config_.padded_width());
  std::vector<nn::Tensor4<T>> skips(static_cast<std::size_t>(stages));
  for (int s = 0; s < stages; ++s) {
    x = unit_forward(x, encoder_[s][0], training, cache ? &cache->enc[s][0] : nullptr, stats);
    x = unit_forward(x, encoder_[s][1], training, cache ? &cache->enc[s][1] : nullptr, stats);
    if (unet) skips[s] = x;
    x = nn::maxpool_forward(x, cache ? &cache->argmax[s] : nullptr);
  }
  if (cache) cache->bottleneck = x;

  nn::Tensor4<T> logits(x.n, 6, config_.padded_height(), config_.padded_width());
  for (int h = 0; h < 3; ++h) {
    const auto& head = heads_[h];
    auto y = x;
    for (int s = stages - 1; s >= 0; --s) {
      const auto& st = head.stages[s];
      auto u = nn::upconv_forward(y, params_[st.up.weight], st.up.out_ch);
      if (cache) cache->heads[h].up_in[s] = std::move(y);
      if (unet) u = nn::concat_channels(u, skips[s]);
      auto* dc = cache ? &cache->heads[h].dec[s] : nullptr;
      y = unit_forward(u, st.a, training, dc ? &(*dc)[0] : nullptr, stats);
      y = unit_forward(y, st.b, training, dc ? &(*dc)[1] : nullptr, stats);
    }
    const auto z = nn::conv_forward(y, params_[head.out.weight], &params_[head.out.bias], 2, 1);
    if (cache) cache->heads[h].out_in = std::move(y);
    for (int i = 0; i < z.n; ++i) {
      std::copy(z.channel(i, 0), z.channel(i, 0) + z.sample_size(), logits.channel(i, 2 * h));
    }
  }
  return logits;
}

template <typename T>
nn::Tensor4<T> Network<T>::infer(const nn::Tensor4<T>& input) const {
  const auto logits = run(input, false, nullptr, nullptr);
  const int top = (config_.padded_height() - config_.input_height) / 2;
  const int left = (config_.padded_width() - config_.input_width) / 2;
  nn::Tensor4<T> out(input.n, 3, config_.input_height, config_.input_width);
  for (int i = 0; i < input.n; ++i) {
    for (int h = 0; h < 3; ++h) {
      for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
          const T d = logits.at(i, 2 * h + 1, y + top, x + left) - logits.at(i, 2 * h, y + top, x + left);
          out.at(i, h, y, x) = sigmoid(d);
        }
      }
    }
  }
  return out;
}

template <typename T>
double Network<T>::loss_and_gradient(const nn::Tensor4<T>& input, const nn::Tensor4<T>& targets,
                                     std::vector<std::vector<T>>* grads, BatchStatistics* stats) const {
  if (targets.n != input.n || targets.c != 3 || targets.h != input.h || targets.w != input.w) {
    throw ShapeError("targets must be [N,3,H,W] matching the input batch");
  }
  Cache cache;
  const auto logits = run(input, true, grads ? &cache : nullptr, stats);
  const int top = (config_.padded_height() - config_.input_height) / 2;
  const int left = (config_.padded_width() - config_.input_width) / 2;
  const double count = static_cast<double>(input.n) * input.h * input.w;
  const double eps = kProbabilityEpsilon;

  nn::Tensor4<T> dlogits;
  if (grads) dlogits = nn::Tensor4<T>(logits.n, logits.c, logits.h, logits.w);
  double total = 0.0;
  for (int i = 0; i < input.n; ++i) {
    for (int h = 0; h < 3; ++h) {
      for (int y = 0; y < input.h; ++y) {
        for (int x = 0; x < input.w; ++x) {
          const T z0 = logits.at(i, 2 * h, y + top, x + left);
          const T z1 = logits.at(i, 2 * h + 1, y + top, x + left);
          const double p = sigmoid(z1 - z0);
          const double t = targets.at(i, h, y, x);
          const double pc = std::clamp(p, eps, 1.0 - eps);
          total -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
          if (grads && p >= eps && p <= 1.0 - eps) {
            const T g = static_cast<T>((p - t) / count);
            dlogits.at(i, 2 * h + 1, y + top, x + left) = g;
            dlogits.at(i, 2 * h, y + top, x + left) = -g;
          }
        }
      }
    }
  }
  const double loss = total / count;
  if (!grads) return loss;

  grads->resize(params_.size());
  for (std::size_t k = 0; k < params_.size(); ++k) (*grads)[k].assign(params_[k].size(), T(0));

  const int stages = config_.stages;
  const bool unet = config_.variant == Architecture::UNetStyle;
  nn::Tensor4<T> dbottleneck(cache.bottleneck.n, cache.bottleneck.c, cache.bottleneck.h, cache.bottleneck.w);
  std::vector<nn::Tensor4<T>> dskips(static_cast<std::size_t>(stages));
  for (int s = 0; s < stages; ++s) {
    const auto& o = cache.enc[s][1].out;
    dskips[s] = nn::Tensor4<T>(o.n, o.c, o.h, o.w);
  }

  for (int h = 0; h < 3; ++h) {
    const auto& head = heads_[h];
    const auto& hc = cache.heads[h];
    nn::Tensor4<T> dz(logits.n, 2, logits.h, logits.w);
    for (int i = 0; i < logits.n; ++i) {
      std::copy(dlogits.channel(i, 2 * h), dlogits.channel(i, 2 * h) + dz.sample_size(), dz.sample(i));
    }
    auto dy = nn::conv_backward(hc.out_in, dz, params_[head.out.weight], 1, (*grads)[head.out.weight],
                                &(*grads)[head.out.bias], true);
    for (int s = 0; s < stages; ++s) {
      const auto& st = head.stages[s];
      dy = unit_backward(dy, st.b, hc.dec[s][1], *grads, true);
      dy = unit_backward(dy, st.a, hc.dec[s][0], *grads, true);
      if (unet) {
        nn::Tensor4<T> dup, dskip;
        nn::split_channels(dy, st.up.out_ch, dup, dskip);
        for (std::size_t k = 0; k < dskip.size(); ++k) dskips[s].data[k] += dskip.data[k];
        dy = std::move(dup);
      }
      dy = nn::upconv_backward(hc.up_in[s], dy, params_[st.up.weight], (*grads)[st.up.weight]);
    }
    for (std::size_t k = 0; k < dy.size(); ++k) dbottleneck.data[k] += dy.data[k];
  }

  auto dx = std::move(dbottleneck);
  for (int s = stages - 1; s >= 0; --s) {
    auto dpre = std::move(dskips[s]);
    nn::maxpool_backward(dx, cache.argmax[s], dpre);
    dx = unit_backward(dpre, encoder_[s][1], cache.enc[s][1], *grads, true);
    dx = unit_backward(dx, encoder_[s][0], cache.enc[s][0], *grads, s > 0);
  }
  return loss;
}

template <typename T>
void Network<T>::update_running_statistics(const BatchStatistics& stats, double momentum) {
  for (std::size_t l = 0; l < stats.mean.size(); ++l) {
    auto& rm = buffers_[2 * l];
    auto& rv = buffers_[2 * l + 1];
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * stats.mean[l][c]);
      rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * stats.var[l][c]);
    }
  }
}

template class Network<float>;
template class Network<double>;

SegModel build_model(const ModelConfig& config) { return SegModel(config); }

template <typename T>
nn::Tensor4<T> pack_frames(std::span<const ImageGrid> frames) {
  if (frames.empty()) return {};
  const int w = frames[0].width, h = frames[0].height;
  nn::Tensor4<T> t(static_cast<int>(frames.size()), 1, h, w);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].width != w || frames[i].height != h) throw ShapeError("frames in a batch must share dimensions");
    std::copy(frames[i].values.begin(), frames[i].values.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

template <typename T>
nn::Tensor4<T> pack_masks(std::span<const MaskTriple> masks) {
  if (masks.empty()) return {};
  const int w = masks[0].width(), h = masks[0].height();
  nn::Tensor4<T> t(static_cast<int>(masks.size()), 3, h, w);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    for (int m = 0; m < 3; ++m) {
      const auto& g = masks[i][m];
      if (g.width != w || g.height != h) throw ShapeError("masks in a batch must share dimensions");
      std::copy(g.values.begin(), g.values.end(), t.channel(static_cast<int>(i), m));
    }
  }
  return t;
}

template nn::Tensor4<float> pack_frames<float>(std::span<const ImageGrid>);
template nn::Tensor4<double> pack_frames<double>(std::span<const ImageGrid>);
template nn::Tensor4<float> pack_masks<float>(std::span<const MaskTriple>);
template nn::Tensor4<double> pack_masks<double>(std::span<const MaskTriple>);

std::vector<PredictionTriple> forward(const SegModel& model, std::span<const ImageGrid> frames) {
  const auto& cfg = model.config();
  for (const auto& f : frames) {
    if (f.width != cfg.input_width || f.height != cfg.input_height) {
      throw ShapeError("frame " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                       " does not match model input " + std::to_string(cfg.input_width) + "x" +
                       std::to_string(cfg.input_height));
    }
  }
  std::vector<PredictionTriple> out;
  out.reserve(frames.size());
  constexpr std::size_t kChunk = 16;
  for (std::size_t start = 0; start < frames.size(); start += kChunk) {
    const auto chunk = frames.subspan(start, std::min(kChunk, frames.size() - start));
    const auto probs = model.infer(pack_frames<float>(chunk));
    for (int i = 0; i < probs.n; ++i) {
      PredictionTriple pt;
      for (int h = 0; h < 3; ++h) {
        pt.p[h] = ProbabilityGrid(probs.w, probs.h);
        std::copy(probs.channel(i, h), probs.channel(i, h) + probs.plane(), pt.p[h].values.begin());
      }
      out.push_back(std::move(pt));
    }
  }
  return out;
}

MaskTriple threshold_predictions(const PredictionTriple& prediction) {
  MaskTriple m;
  for (int h = 0; h < 3; ++h) {
    const auto& p = prediction.p[h];
    m[h] = BinaryGrid(p.width, p.height);
    for (std::size_t k = 0; k < p.size(); ++k) m[h].values[k] = p.values[k] >= 0.5f ? 1 : 0;
  }
  return m;
}

MaskTriple predict_masks(const SegModel& model, const ImageGrid& frame) {
  return threshold_predictions(forward(model, std::span<const ImageGrid>(&frame, 1)).front());
}

double bce_loss(std::span<const PredictionTriple> predictions, std::span<const MaskTriple> targets) {
  if (predictions.size() != targets.size() || predictions.empty()) {
    throw ShapeError("bce_loss: prediction and target batches must be non-empty and equal in size");
  }
  double total = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (int h = 0; h < 3; ++h) {
      const auto& p = predictions[i].p[h];
      const auto& t = targets[i][h];
      require_same_shape(p, t, "bce_loss");
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double pc = std::clamp(static_cast<double>(p.values[k]), kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
        const double y = t.values[k];
        total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
      }
    }
    count += static_cast<double>(predictions[i].p[0].size());
  }
  return total / count;
}

NamedGradients gradient(const SegModel& model, std::span<const ImageGrid> batch, std::span<const MaskTriple> targets) {
  if (batch.size() != targets.size() || batch.empty()) throw ShapeError("gradient: batch and targets differ in size");
  std::vector<std::vector<float>> grads;
  model.loss_and_gradient(pack_frames<float>(batch), pack_masks<float>(targets), &grads);
  NamedGradients out;
  for (std::size_t i = 0; i < grads.size(); ++i) out[model.parameter_info()[i].name] = std::move(grads[i]);
  return out;
}

}  // namespace atbseg
