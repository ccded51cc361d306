#include "sononet/saliency.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

namespace sononet {

namespace {

Tensor promote_to_batch(const Tensor& image) {
  if (image.rank() == 4) return image;
  if (image.rank() == 3)
    return image.reshaped({1, image.extent(0), image.extent(1), image.extent(2)});
  if (image.rank() == 2) return image.reshaped({1, 1, image.extent(0), image.extent(1)});
  throw invalid_argument_error("saliency: image must be rank 2..4, got " + image.shape_str());
}

void check_class(const Network& net, int k) {
  if (k < 0 || k >= net.spec.num_classes)
    throw invalid_argument_error("saliency: class " + std::to_string(k) + " out of range [0," +
                                 std::to_string(net.spec.num_classes) + ")");
}

// Sum the input gradient over channels into an [H,W] map.
Tensor flatten_channels(const Tensor& dx) {
  const int c = dx.extent(1), h = dx.extent(2), w = dx.extent(3);
  Tensor m({h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.at(y, x) += dx.at(0, ch, y, x);
  return m;
}

SaliencyMap score_seeded(const Network& net, const Tensor& image, int k, BackwardMode mode,
                         SaliencyMethod method) {
  check_class(net, k);
  const Tensor batch = promote_to_batch(image);
  Tape tape;
  forward(net, batch, &tape);
  Tensor seed({1, net.spec.num_classes});
  seed.at(0, k) = 1.f;
  Tensor dx = backward_scores_to_input(net, tape, seed, mode);
  return {flatten_channels(dx), method, k};
}

}  // namespace

SaliencyMap plain_saliency(const Network& net, const Tensor& image, int k) {
  return score_seeded(net, image, k, BackwardMode::PlainGradient, SaliencyMethod::Plain);
}

SaliencyMap guided_saliency(const Network& net, const Tensor& image, int k) {
  return score_seeded(net, image, k, BackwardMode::Guided, SaliencyMethod::GuidedFull);
}

SaliencyMap weighted_saliency(const Network& net, const Tensor& image, int k,
                              BackwardMode relu_rule) {
  check_class(net, k);
  const Tensor batch = promote_to_batch(image);
  Tape tape;
  ForwardResult fr = forward(net, batch, &tape);
  // seed with the class score map thresholded at zero, other classes silent
  Tensor seed(fr.class_maps.shape());
  const int hf = seed.extent(2), wf = seed.extent(3);
  for (int y = 0; y < hf; ++y)
    for (int x = 0; x < wf; ++x) {
      const float h = fr.class_maps.at(0, k, y, x);
      seed.at(0, k, y, x) = h > 0.f ? h : 0.f;
    }
  Tensor dx = backward_to_input(net, tape, seed, relu_rule);
  return {flatten_channels(dx), SaliencyMethod::WeightedGuided, k};
}

SaliencyMap weighted_saliency_per_neuron(const Network& net, const Tensor& image, int k,
                                         BackwardMode relu_rule) {
  check_class(net, k);
  const Tensor batch = promote_to_batch(image);
  Tape tape;
  ForwardResult fr = forward(net, batch, &tape);
  const int hf = fr.class_maps.extent(2), wf = fr.class_maps.extent(3);
  Tensor acc({batch.extent(2), batch.extent(3)});
  for (int y = 0; y < hf; ++y)
    for (int x = 0; x < wf; ++x) {
      const float h = fr.class_maps.at(0, k, y, x);
      if (h <= 0.f) continue;
      Tensor seed(fr.class_maps.shape());
      seed.at(0, k, y, x) = h;
      Tensor dx = backward_to_input(net, tape, seed, relu_rule);
      Tensor m = flatten_channels(dx);
      for (size_t i = 0; i < acc.numel(); ++i) acc[i] += m[i];
    }
  return {std::move(acc), SaliencyMethod::WeightedGuided, k};
}

Tensor gaussian5x5() {
  constexpr double sigma = 1.0;
  Tensor g({5, 5});
  double sum = 0;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const double dy = y - 2, dx = x - 2;
      const double v = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      g.at(y, x) = float(v);
      sum += v;
    }
  for (size_t i = 0; i < g.numel(); ++i) g[i] = float(g[i] / sum);
  return g;
}

ConfidenceMap confidence_map(const SaliencyMap& saliency, SignMode mode) {
  const Tensor& s = saliency.values;
  const int h = s.extent(0), w = s.extent(1);
  Tensor selected({h, w});
  for (size_t i = 0; i < s.numel(); ++i) {
    const float v = s[i];
    switch (mode) {
      case SignMode::PositiveOnly: selected[i] = v > 0.f ? v : 0.f; break;
      case SignMode::NegativeOnly: selected[i] = v < 0.f ? -v : 0.f; break;
      case SignMode::Both: selected[i] = std::fabs(v); break;
    }
  }
  const Tensor g = gaussian5x5();
  Tensor blurred({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int ky = -2; ky <= 2; ++ky) {
        const int yy = y + ky;
        if (yy < 0 || yy >= h) continue;
        for (int kx = -2; kx <= 2; ++kx) {
          const int xx = x + kx;
          if (xx < 0 || xx >= w) continue;
          acc += double(g.at(ky + 2, kx + 2)) * selected.at(yy, xx);
        }
      }
      blurred.at(y, x) = float(acc);
    }
  return {std::move(blurred), mode};
}

void export_map_pgm(const Tensor& map2d, const std::string& path) {
  const int h = map2d.extent(0), w = map2d.extent(1);
  float lo = map2d[0], hi = map2d[0];
  for (size_t i = 0; i < map2d.numel(); ++i) {
    lo = std::min(lo, map2d[i]);
    hi = std::max(hi, map2d[i]);
  }
  const float span = hi > lo ? hi - lo : 1.f;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  for (size_t i = 0; i < map2d.numel(); ++i) {
    const float v = (map2d[i] - lo) / span;
    f.put(char(uint8_t(std::lround(v * 255.f))));
  }
  if (!f) throw data_error("failed while writing: " + path);
}

void export_map_raw(const Tensor& map2d, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  const uint32_t h = uint32_t(map2d.extent(0)), w = uint32_t(map2d.extent(1));
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(map2d.data()),
          std::streamsize(map2d.numel() * sizeof(float)));
  if (!f) throw data_error("failed while writing: " + path);
}

Tensor import_map_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open: " + path);
  uint32_t h = 0, w = 0;
  f.read(reinterpret_cast<char*>(&h), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  if (!f || h == 0 || w == 0) throw data_error("bad raw map header: " + path);
  Tensor t({int(h), int(w)});
  f.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * sizeof(float)));
  if (!f) throw data_error("raw map truncated: " + path);
  return t;
}

}  // namespace sononet
