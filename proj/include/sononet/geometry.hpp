#pragma once

#include <algorithm>
#include <string>

#include "sononet/common.hpp"

namespace sononet {

// Axis-aligned pixel rectangle, inclusive-exclusive on both axes.
struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return (long long)width() * height(); }
  bool valid() const { return x0 < x1 && y0 < y1; }

  bool operator==(const BoundingBox&) const = default;
  std::string str() const {
    return "(" + std::to_string(x0) + "," + std::to_string(y0) + "," + std::to_string(x1) + "," +
           std::to_string(y1) + ")";
  }
};

// Intersection over union; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

}  // namespace sononet
