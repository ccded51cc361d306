#include "sononet/localizer.hpp"

#include <cmath>
#include <numeric>

namespace sononet {

size_t Mask::count() const {
  size_t n = 0;
  for (uint8_t v : on) n += v;
  return n;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid() || !b.valid())
    throw invalid_argument_error("iou: invalid box " + (a.valid() ? b.str() : a.str()));
  const int ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
  const int ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
  const long long iw = std::max(0, ix1 - ix0), ih = std::max(0, iy1 - iy0);
  const long long inter = iw * ih;
  const long long uni = a.area() + b.area() - inter;
  return double(inter) / double(uni);
}

float isodata_threshold(const Tensor& map2d) {
  const size_t n = map2d.numel();
  if (n < 2) throw invalid_argument_error("isodata_threshold: need at least two values");
  float lo = map2d[0], hi = map2d[0];
  double total = 0;
  for (size_t i = 0; i < n; ++i) {
    lo = std::min(lo, map2d[i]);
    hi = std::max(hi, map2d[i]);
    total += map2d[i];
  }
  if (lo == hi)
    throw invalid_argument_error("isodata_threshold: constant map, no threshold exists");

  double t = total / double(n);
  for (int iter = 0; iter < 100; ++iter) {
    double sum_lo = 0, sum_hi = 0;
    size_t n_lo = 0, n_hi = 0;
    for (size_t i = 0; i < n; ++i) {
      if (double(map2d[i]) < t) {
        sum_lo += map2d[i];
        ++n_lo;
      } else {
        sum_hi += map2d[i];
        ++n_hi;
      }
    }
    // the partition always has members on both sides for non-constant maps
    const double mean_lo = n_lo ? sum_lo / double(n_lo) : double(lo);
    const double mean_hi = n_hi ? sum_hi / double(n_hi) : double(hi);
    const double next = 0.5 * (mean_lo + mean_hi);
    const double dt = std::fabs(next - t);
    t = next;
    if (dt < 1e-6) break;
  }
  return float(t);
}

Mask threshold_mask(const Tensor& map2d, float threshold) {
  Mask m = Mask::zeros(map2d.extent(0), map2d.extent(1));
  for (size_t i = 0; i < map2d.numel(); ++i) m.on[i] = map2d[i] >= threshold ? 1 : 0;
  return m;
}

Mask largest_component(const Mask& mask) {
  const int h = mask.height, w = mask.width;
  std::vector<int> label(size_t(h) * w, -1);
  std::vector<size_t> stack;
  int best_label = -1;
  size_t best_size = 0;
  size_t best_first = 0;
  int next_label = 0;

  for (size_t start = 0; start < label.size(); ++start) {
    if (!mask.on[start] || label[start] != -1) continue;
    const int cur = next_label++;
    size_t size = 0;
    stack.clear();
    stack.push_back(start);
    label[start] = cur;
    while (!stack.empty()) {
      const size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int y = int(p / size_t(w)), x = int(p % size_t(w));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dy && !dx) continue;
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const size_t q = size_t(ny) * w + nx;
          if (mask.on[q] && label[q] == -1) {
            label[q] = cur;
            stack.push_back(q);
          }
        }
    }
    // row-major scan order: the first pixel of this component is `start`,
    // so strict > keeps the earliest component on ties
    if (size > best_size) {
      best_size = size;
      best_label = cur;
      best_first = start;
    }
  }
  (void)best_first;

  Mask out = Mask::zeros(h, w);
  if (best_label >= 0)
    for (size_t i = 0; i < label.size(); ++i) out.on[i] = label[i] == best_label ? 1 : 0;
  return out;
}

BoundingBox min_bbox(const Mask& mask) {
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw invalid_argument_error("min_bbox: empty mask");
  return {x0, y0, x1 + 1, y1 + 1};
}

ClassSignTable default_sign_table(int foreground_classes) {
  ClassSignTable t(size_t(foreground_classes), SignMode::Both);
  for (int k = 0; k < foreground_classes; ++k) {
    if (k < 4)
      t[size_t(k)] = SignMode::PositiveOnly;
    else if (k < 8)
      t[size_t(k)] = SignMode::NegativeOnly;
  }
  return t;
}

LocalizeResult localize(const Network& net, const Tensor& image, int class_id,
                        const ClassSignTable& sign_table) {
  if (class_id < 0 || class_id >= int(sign_table.size()))
    throw invalid_argument_error("localize: class " + std::to_string(class_id) +
                                 " has no sign table entry");
  SaliencyMap s = weighted_saliency(net, image, class_id);
  ConfidenceMap cm = confidence_map(s, sign_table[size_t(class_id)]);

  LocalizeResult r{std::nullopt, std::move(cm)};
  float lo = r.confidence.values[0], hi = lo;
  for (size_t i = 0; i < r.confidence.values.numel(); ++i) {
    lo = std::min(lo, r.confidence.values[i]);
    hi = std::max(hi, r.confidence.values[i]);
  }
  if (lo == hi) return r;  // constant (e.g. all-zero) map: no localisation

  const float t = isodata_threshold(r.confidence.values);
  Mask mask = threshold_mask(r.confidence.values, t);
  if (mask.empty()) return r;
  Mask biggest = largest_component(mask);
  r.box = min_bbox(biggest);
  return r;
}

}  // namespace sononet
