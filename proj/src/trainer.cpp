#include "sononet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "sononet/pgm.hpp"

namespace sononet {

// ------------------------------------------------------------- config

void TrainConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  char buf[64];
  auto put_f = [&](const char* k, float v) {
    std::snprintf(buf, sizeof(buf), "%.9g", double(v));
    f << k << "=" << buf << "\n";
  };
  put_f("initial_lr", initial_lr);
  put_f("warmup_lr", warmup_lr);
  f << "warmup_iters=" << warmup_iters << "\n";
  put_f("momentum", momentum);
  put_f("lr_divisor", lr_divisor);
  f << "plateau_patience=" << plateau_patience << "\n";
  f << "eval_every=" << eval_every << "\n";
  f << "per_class_quota=" << per_class_quota << "\n";
  f << "background_quota=" << background_quota << "\n";
  f << "max_lr_drops=" << max_lr_drops << "\n";
  f << "max_iters=" << max_iters << "\n";
  f << "seed=" << seed << "\n";
  if (!f) throw data_error("failed while writing: " + path);
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot open config: " + path);
  TrainConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw data_error("malformed config line " + std::to_string(lineno) + " in " + path);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "initial_lr") c.initial_lr = std::stof(val);
      else if (key == "warmup_lr") c.warmup_lr = std::stof(val);
      else if (key == "warmup_iters") c.warmup_iters = std::stoi(val);
      else if (key == "momentum") c.momentum = std::stof(val);
      else if (key == "lr_divisor") c.lr_divisor = std::stof(val);
      else if (key == "plateau_patience") c.plateau_patience = std::stoi(val);
      else if (key == "eval_every") c.eval_every = std::stoi(val);
      else if (key == "per_class_quota") c.per_class_quota = std::stoi(val);
      else if (key == "background_quota") c.background_quota = std::stoi(val);
      else if (key == "max_lr_drops") c.max_lr_drops = std::stoi(val);
      else if (key == "max_iters") c.max_iters = std::stoi(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else throw data_error("unknown config key '" + key + "' in " + path);
    } catch (const std::logic_error&) {
      throw data_error("bad value for '" + key + "' in " + path);
    }
  }
  if (c.initial_lr <= 0 || c.warmup_lr <= 0 || c.lr_divisor <= 1 || c.per_class_quota < 1 ||
      c.background_quota < 0 || c.plateau_patience < 1)
    throw data_error("config out of range: " + path);
  return c;
}

// ------------------------------------------------------------- sampling

std::vector<size_t> sample_batch(const Manifest& manifest, int num_classes, int per_class_quota,
                                 int background_quota, Rng& rng) {
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(num_classes));
  for (size_t i = 0; i < manifest.records.size(); ++i) {
    const int c = manifest.records[i].class_id;
    if (c >= 0 && c < num_classes) by_class[size_t(c)].push_back(i);
  }
  std::vector<size_t> batch;
  for (int c = 0; c < num_classes - 1; ++c) {
    if (by_class[size_t(c)].empty())
      throw invalid_argument_error("sample_batch: class " + std::to_string(c) +
                                   " has no samples");
    for (int q = 0; q < per_class_quota; ++q)
      batch.push_back(by_class[size_t(c)][size_t(
          rng.uniform_int(0, int(by_class[size_t(c)].size()) - 1))]);
  }
  const auto& bg = by_class[size_t(num_classes - 1)];
  if (background_quota > 0 && bg.empty())
    throw invalid_argument_error("sample_batch: class " + std::to_string(num_classes - 1) +
                                 " (background) has no samples");
  for (int q = 0; q < background_quota; ++q)
    batch.push_back(bg[size_t(rng.uniform_int(0, int(bg.size()) - 1))]);
  rng.shuffle(batch);
  return batch;
}

// ------------------------------------------------------------- augment

AugmentParams draw_augment_params(int height, int width, Rng& rng) {
  if (height < kAugmentOut || width < kAugmentOut)
    throw invalid_argument_error("augment: source " + std::to_string(width) + "x" +
                                 std::to_string(height) + " smaller than " +
                                 std::to_string(kAugmentOut) + "x" + std::to_string(kAugmentOut));
  AugmentParams p;
  p.side = rng.uniform_int(kAugmentMinSide, kAugmentOut);
  p.y0 = rng.uniform_int(0, height - p.side);
  p.x0 = rng.uniform_int(0, width - p.side);
  p.flip = rng.bernoulli(0.5);
  p.angle_deg = rng.uniform(-kAugmentMaxAngle, kAugmentMaxAngle);
  return p;
}

static float bilinear_at(const Tensor& img, float y, float x, int h, int w, bool zero_outside) {
  if (zero_outside && (y < -0.5f || y > float(h) - 0.5f || x < -0.5f || x > float(w) - 0.5f))
    return 0.f;
  const float yc = std::min(std::max(y, 0.f), float(h - 1));
  const float xc = std::min(std::max(x, 0.f), float(w - 1));
  const int y0 = std::min(int(yc), h - 2 >= 0 ? h - 2 : 0), x0 = std::min(int(xc), w - 2 >= 0 ? w - 2 : 0);
  const float ty = yc - float(y0), tx = xc - float(x0);
  const float a = img.at(0, 0, y0, x0), b = img.at(0, 0, y0, std::min(x0 + 1, w - 1));
  const float c = img.at(0, 0, std::min(y0 + 1, h - 1), x0);
  const float d = img.at(0, 0, std::min(y0 + 1, h - 1), std::min(x0 + 1, w - 1));
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

Tensor augment_with_params(const Tensor& image, const AugmentParams& p) {
  if (image.rank() != 3 || image.extent(0) != 1)
    throw invalid_argument_error("augment: need a [1,H,W] image, got " + image.shape_str());
  const int h = image.extent(1), w = image.extent(2);
  if (p.side > h || p.side > w || p.y0 + p.side > h || p.x0 + p.side > w)
    throw invalid_argument_error("augment: crop outside image");

  const Tensor img4 = image.reshaped({1, 1, h, w});

  // crop + rescale to the output size (exact identity when side == out)
  Tensor scaled({1, 1, kAugmentOut, kAugmentOut});
  const float ratio = float(p.side) / float(kAugmentOut);
  for (int y = 0; y < kAugmentOut; ++y) {
    const float sy = (float(y) + 0.5f) * ratio - 0.5f + float(p.y0);
    for (int x = 0; x < kAugmentOut; ++x) {
      const float sx = (float(x) + 0.5f) * ratio - 0.5f + float(p.x0);
      scaled.at(0, 0, y, x) = bilinear_at(img4, sy, sx, h, w, false);
    }
  }

  if (p.flip) {
    for (int y = 0; y < kAugmentOut; ++y)
      for (int x = 0; x < kAugmentOut / 2; ++x)
        std::swap(scaled.at(0, 0, y, x), scaled.at(0, 0, y, kAugmentOut - 1 - x));
  }

  if (p.angle_deg == 0.f) return scaled.reshaped({1, kAugmentOut, kAugmentOut});

  // rotate about the centre, zero fill
  Tensor rotated({1, 1, kAugmentOut, kAugmentOut});
  const float rad = p.angle_deg * 3.14159265358979323846f / 180.f;
  const float cr = std::cos(rad), sr = std::sin(rad);
  const float cc = float(kAugmentOut - 1) * 0.5f;
  for (int y = 0; y < kAugmentOut; ++y)
    for (int x = 0; x < kAugmentOut; ++x) {
      const float dy = float(y) - cc, dx = float(x) - cc;
      const float sy = cc + (sr * dx + cr * dy);
      const float sx = cc + (cr * dx - sr * dy);
      rotated.at(0, 0, y, x) = bilinear_at(scaled, sy, sx, kAugmentOut, kAugmentOut, true);
    }
  return rotated.reshaped({1, kAugmentOut, kAugmentOut});
}

Tensor augment(const Tensor& image, Rng& rng) {
  return augment_with_params(image, draw_augment_params(image.extent(1), image.extent(2), rng));
}

void normalize_image(Tensor& image) {
  double sum = 0, sq = 0;
  for (size_t i = 0; i < image.numel(); ++i) {
    sum += image[i];
    sq += double(image[i]) * image[i];
  }
  const double n = double(image.numel());
  const double mean = sum / n;
  const double var = std::max(0.0, sq / n - mean * mean);
  const float inv_std = float(1.0 / std::max(std::sqrt(var), 1e-6));
  for (size_t i = 0; i < image.numel(); ++i)
    image[i] = (image[i] - float(mean)) * inv_std;
}

// ------------------------------------------------------------- optimiser

OptimizerState OptimizerState::init(const Network& net, float lr) {
  OptimizerState s;
  s.lr = lr;
  s.velocity.resize(net.params.size());
  for (size_t i = 0; i < net.params.size(); ++i) {
    const auto& p = net.params[i];
    if (p.kernel.empty()) continue;
    s.velocity[i].kernel = Tensor(p.kernel.shape());
    s.velocity[i].bias.assign(p.bias.size(), 0.f);
    if (!p.bn.empty()) {
      s.velocity[i].gamma.assign(p.bn.gamma.size(), 0.f);
      s.velocity[i].beta.assign(p.bn.beta.size(), 0.f);
    }
  }
  return s;
}

void nesterov_lookahead(std::vector<LayerParams>& params,
                        const std::vector<LayerGrads>& velocity, float momentum) {
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& v = velocity[i];
    if (p.kernel.empty()) continue;
    for (size_t j = 0; j < p.kernel.numel(); ++j) p.kernel[j] += momentum * v.kernel[j];
    for (size_t j = 0; j < p.bias.size(); ++j) p.bias[j] += momentum * v.bias[j];
    if (!p.bn.empty()) {
      for (size_t j = 0; j < p.bn.gamma.size(); ++j) p.bn.gamma[j] += momentum * v.gamma[j];
      for (size_t j = 0; j < p.bn.beta.size(); ++j) p.bn.beta[j] += momentum * v.beta[j];
    }
  }
}

void nesterov_apply(std::vector<LayerParams>& params, std::vector<LayerGrads>& velocity,
                    const std::vector<LayerGrads>& grads, float momentum, float lr) {
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& v = velocity[i];
    const auto& g = grads[i];
    if (p.kernel.empty()) continue;
    for (size_t j = 0; j < p.kernel.numel(); ++j) {
      v.kernel[j] = momentum * v.kernel[j] - lr * g.kernel[j];
      p.kernel[j] += v.kernel[j];
    }
    for (size_t j = 0; j < p.bias.size(); ++j) {
      v.bias[j] = momentum * v.bias[j] - lr * g.bias[j];
      p.bias[j] += v.bias[j];
    }
    if (!p.bn.empty()) {
      for (size_t j = 0; j < p.bn.gamma.size(); ++j) {
        v.gamma[j] = momentum * v.gamma[j] - lr * g.gamma[j];
        p.bn.gamma[j] += v.gamma[j];
      }
      for (size_t j = 0; j < p.bn.beta.size(); ++j) {
        v.beta[j] = momentum * v.beta[j] - lr * g.beta[j];
        p.bn.beta[j] += v.beta[j];
      }
    }
  }
}

namespace {

struct TrainableSnapshot {
  std::vector<Tensor> kernels;
  std::vector<std::vector<float>> biases, gammas, betas;

  static TrainableSnapshot take(const std::vector<LayerParams>& params) {
    TrainableSnapshot s;
    for (const auto& p : params) {
      s.kernels.push_back(p.kernel);
      s.biases.push_back(p.bias);
      s.gammas.push_back(p.bn.gamma);
      s.betas.push_back(p.bn.beta);
    }
    return s;
  }

  // running stats are not restored: train-mode forwards keep their updates
  void restore(std::vector<LayerParams>& params) const {
    for (size_t i = 0; i < params.size(); ++i) {
      params[i].kernel = kernels[i];
      params[i].bias = biases[i];
      params[i].bn.gamma = gammas[i];
      params[i].bn.beta = betas[i];
    }
  }
};

}  // namespace

float train_step(Network& net, const Tensor& batch, const std::vector<int>& labels,
                 OptimizerState& opt, float lr, float momentum) {
  const TrainableSnapshot snapshot = TrainableSnapshot::take(net.params);
  nesterov_lookahead(net.params, opt.velocity, momentum);

  Tape tape;
  ForwardResult fr = forward(net, batch, PhaseMode::Train, &tape);
  XentOut xo = softmax_xent(fr.scores, labels);
  if (!std::isfinite(xo.loss))
    throw numeric_error("non-finite training loss at iteration " +
                        std::to_string(opt.iteration + 1));
  const std::vector<LayerGrads> grads = backward_params(net, tape, xo.grad);

  snapshot.restore(net.params);
  nesterov_apply(net.params, opt.velocity, grads, momentum, lr);
  ++opt.iteration;
  return xo.loss;
}

bool lr_schedule_update(OptimizerState& opt, float val_loss, const TrainConfig& config) {
  if (!opt.has_best || val_loss < opt.best_val_loss) {
    opt.best_val_loss = val_loss;
    opt.has_best = true;
    opt.evals_since_improvement = 0;
    return false;
  }
  ++opt.evals_since_improvement;
  if (opt.evals_since_improvement >= config.plateau_patience) {
    if (opt.drops >= config.max_lr_drops) return true;
    opt.lr /= config.lr_divisor;
    ++opt.drops;
    opt.evals_since_improvement = 0;
  }
  return false;
}

// ------------------------------------------------------------- train loop

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os << "iter,lr,train_loss,val_loss\n";
  char buf[128];
  for (const auto& r : log) {
    if (std::isnan(r.val_loss))
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.6f,\n", r.iter, double(r.lr),
                    double(r.train_loss));
    else
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.6f,%.6f\n", r.iter, double(r.lr),
                    double(r.train_loss), double(r.val_loss));
    os << buf;
  }
  return os.str();
}

void save_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  f << train_log_csv(log);
  if (!f) throw data_error("failed while writing: " + path);
}

namespace {

// All images of the manifest cached as quantised bytes.
struct ImageCache {
  std::vector<std::vector<uint8_t>> bytes;
  std::vector<int> heights, widths;

  ImageCache(const Manifest& m, const std::string& root) {
    bytes.reserve(m.records.size());
    for (const auto& r : m.records) {
      Tensor img = read_pgm(root.empty() ? r.path : root + "/" + r.path);
      heights.push_back(img.extent(1));
      widths.push_back(img.extent(2));
      bytes.push_back(quantize_u8(img));
    }
  }

  Tensor get(size_t i) const { return dequantize_u8(bytes[i], heights[i], widths[i]); }
};

float validation_loss(Network& net, const Manifest& val, const ImageCache& cache,
                      const std::vector<size_t>& cache_index, int batch_size) {
  double total = 0;
  size_t done = 0;
  while (done < val.records.size()) {
    const size_t n = std::min(size_t(batch_size), val.records.size() - done);
    Tensor first = cache.get(cache_index[done]);
    const int h = first.extent(1), w = first.extent(2);
    Tensor batch({int(n), 1, h, w});
    std::vector<int> labels(n);
    for (size_t b = 0; b < n; ++b) {
      Tensor img = cache.get(cache_index[done + b]);
      normalize_image(img);
      std::copy(img.data(), img.data() + img.numel(),
                batch.data() + b * size_t(h) * size_t(w));
      labels[b] = val.records[done + b].class_id;
    }
    ForwardResult fr = forward(std::as_const(net), batch);
    XentOut xo = softmax_xent(fr.scores, labels);
    total += double(xo.loss) * double(n);
    done += n;
  }
  return float(total / double(val.records.size()));
}

}  // namespace

TrainResult train(const NetworkSpec& spec, const Manifest& manifest, const std::string& root,
                  const TrainConfig& config) {
  spec.validate();
  if (manifest.records.empty()) throw invalid_argument_error("train: empty manifest");

  // case-level 80/20 split of the provided manifest for validation
  auto [fit, val] = split_by_case(manifest, 0.8, config.seed);
  if (fit.records.empty() || val.records.empty())
    throw invalid_argument_error("train: case split produced an empty side (" +
                                 std::to_string(fit.records.size()) + " fit / " +
                                 std::to_string(val.records.size()) + " val records)");

  // one shared cache; fit/val address it through index maps
  std::map<std::string, size_t> path_to_idx;
  ImageCache cache(manifest, root);
  for (size_t i = 0; i < manifest.records.size(); ++i)
    path_to_idx[manifest.records[i].path] = i;
  auto index_of = [&](const Manifest& m) {
    std::vector<size_t> idx;
    for (const auto& r : m.records) idx.push_back(path_to_idx.at(r.path));
    return idx;
  };
  const std::vector<size_t> fit_idx = index_of(fit), val_idx = index_of(val);

  Network net = Network::init(spec, config.seed);
  OptimizerState opt = OptimizerState::init(net, config.initial_lr);
  Rng rng = Rng::stream(config.seed, 0x7a17);

  TrainResult result;
  result.net = net;
  float last_val = std::nanf("");
  const int k = spec.num_classes;

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const float lr = iter <= config.warmup_iters ? config.warmup_lr : opt.lr;

    const std::vector<size_t> picks =
        sample_batch(fit, k, config.per_class_quota, config.background_quota, rng);
    Tensor batch({int(picks.size()), 1, kAugmentOut, kAugmentOut});
    std::vector<int> labels(picks.size());
    for (size_t b = 0; b < picks.size(); ++b) {
      const size_t rec = picks[b];
      Tensor img = cache.get(fit_idx[rec]);
      Tensor aug = augment(img, rng);
      normalize_image(aug);
      std::copy(aug.data(), aug.data() + aug.numel(),
                batch.data() + b * aug.numel());
      labels[b] = fit.records[rec].class_id;
    }

    const float loss = train_step(net, batch, labels, opt, lr, config.momentum);
    result.log.push_back({iter, lr, loss, last_val});
    result.iterations = iter;

    if (iter % config.eval_every == 0) {
      last_val = validation_loss(net, val, cache, val_idx, 26);
      result.log.back().val_loss = last_val;
      if (!opt.has_best || last_val < opt.best_val_loss) {
        result.net = net;  // snapshot of the best weights
        result.best_val_loss = last_val;
      }
      if (lr_schedule_update(opt, last_val, config)) break;
    }
  }
  if (!opt.has_best) result.net = net;
  return result;
}

}  // namespace sononet
