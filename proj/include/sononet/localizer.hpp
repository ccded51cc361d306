#pragma once

#include <optional>
#include <vector>

#include "sononet/geometry.hpp"
#include "sononet/saliency.hpp"

namespace sononet {

// Binary pixel mask with image extents.
struct Mask {
  int height = 0, width = 0;
  std::vector<uint8_t> on;

  static Mask zeros(int h, int w) { return {h, w, std::vector<uint8_t>(size_t(h) * w, 0)}; }
  bool at(int y, int x) const { return on[size_t(y) * width + x] != 0; }
  void set(int y, int x, bool v) { on[size_t(y) * width + x] = v ? 1 : 0; }
  size_t count() const;
  bool empty() const { return count() == 0; }
};

// Iterative two-mean threshold: t <- (mean(values < t) + mean(values >= t))/2
// from the global mean, until |dt| < 1e-6 or 100 iterations. Rejects constant
// maps (no threshold separates a single value).
float isodata_threshold(const Tensor& map2d);

Mask threshold_mask(const Tensor& map2d, float threshold);  // keeps values >= t

// Keeps only the most populous 8-connected component; ties go to the component
// whose first pixel in row-major order comes first. Empty input stays empty.
Mask largest_component(const Mask& mask);

// Tightest axis-aligned rectangle containing all set pixels; rejects empty.
BoundingBox min_bbox(const Mask& mask);

// class id -> which saliency sign carries the structure.
using ClassSignTable = std::vector<SignMode>;

// Synthetic taxonomy grouping: classes 0-3 bright (positive saliencies),
// 4-7 dark (negative), 8-12 mixed polarity.
ClassSignTable default_sign_table(int foreground_classes = 13);

struct LocalizeResult {
  std::optional<BoundingBox> box;  // empty: no localisation (counts incorrect)
  ConfidenceMap confidence;
};

// Full weakly-supervised pipeline: weighted saliency -> sign-selected blurred
// confidence map -> Isodata threshold -> largest component -> min box.
// The image must be normalised the same way as the training inputs.
LocalizeResult localize(const Network& net, const Tensor& image, int class_id,
                        const ClassSignTable& sign_table);

}  // namespace sononet
