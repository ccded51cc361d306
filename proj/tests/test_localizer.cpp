#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sononet/localizer.hpp"
#include "test_util.hpp"

using namespace sononet;
using testutil::random_tensor;

namespace {

// Reference labelling by repeated flood fill, for cross-checking.
Mask flood_largest(const Mask& m) {
  const int h = m.height, w = m.width;
  std::vector<int> label(size_t(h) * w, -1);
  int next = 0;
  size_t best_size = 0;
  int best = -1;
  for (int sy = 0; sy < h; ++sy)
    for (int sx = 0; sx < w; ++sx) {
      if (!m.at(sy, sx) || label[size_t(sy) * w + sx] != -1) continue;
      size_t size = 0;
      std::vector<std::pair<int, int>> queue{{sy, sx}};
      label[size_t(sy) * w + sx] = next;
      while (!queue.empty()) {
        auto [y, x] = queue.back();
        queue.pop_back();
        ++size;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w || (dy == 0 && dx == 0)) continue;
            if (m.at(ny, nx) && label[size_t(ny) * w + nx] == -1) {
              label[size_t(ny) * w + nx] = next;
              queue.emplace_back(ny, nx);
            }
          }
      }
      if (size > best_size) {
        best_size = size;
        best = next;
      }
      ++next;
    }
  Mask out = Mask::zeros(h, w);
  for (size_t i = 0; i < out.on.size(); ++i) out.on[i] = (best >= 0 && label[i] == best) ? 1 : 0;
  return out;
}

}  // namespace

TEST_CASE("isodata on {0,0,0,10,10} converges to 5") {
  Tensor m({1, 5}, {0, 0, 0, 10, 10});
  CHECK(isodata_threshold(m) == doctest::Approx(5.f).epsilon(1e-6));
}

TEST_CASE("isodata on a two-value map is the midpoint") {
  Tensor m({2, 3}, {1.f, 1.f, 4.f, 4.f, 1.f, 4.f});
  CHECK(isodata_threshold(m) == doctest::Approx(2.5f).epsilon(1e-6));
}

TEST_CASE("isodata satisfies the two-mean fixed point on random maps") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor m = random_tensor({12, 17}, rng, 0.f, rng.uniform(0.5f, 4.f));
    const float t = isodata_threshold(m);
    double lo = 0, hi = 0;
    size_t nlo = 0, nhi = 0;
    float mn = m[0], mx = m[0];
    for (size_t i = 0; i < m.numel(); ++i) {
      mn = std::min(mn, m[i]);
      mx = std::max(mx, m[i]);
      if (m[i] < t) {
        lo += m[i];
        ++nlo;
      } else {
        hi += m[i];
        ++nhi;
      }
    }
    REQUIRE(nlo > 0);
    REQUIRE(nhi > 0);
    CHECK(std::fabs(0.5 * (lo / double(nlo) + hi / double(nhi)) - double(t)) < 1e-5);
    // strictly between the extremes
    CHECK(t > mn);
    CHECK(t < mx);
  }
}

TEST_CASE("isodata rejects constant maps") {
  Tensor m = Tensor::full({4, 4}, 0.f);
  CHECK_THROWS_AS(isodata_threshold(m), invalid_argument_error);
  Tensor m2 = Tensor::full({4, 4}, 3.25f);
  CHECK_THROWS_AS(isodata_threshold(m2), invalid_argument_error);
}

TEST_CASE("largest_component keeps the biggest blob") {
  Mask m = Mask::zeros(8, 8);
  // 5-pixel blob
  for (int i = 0; i < 5; ++i) m.set(1, 1 + i, true);
  // 3-pixel blob
  for (int i = 0; i < 3; ++i) m.set(5, 2 + i, true);
  Mask out = largest_component(m);
  CHECK(out.count() == 5);
  for (int i = 0; i < 5; ++i) CHECK(out.at(1, 1 + i));
  CHECK_FALSE(out.at(5, 2));

  // single blob unchanged
  Mask single = Mask::zeros(4, 4);
  single.set(1, 1, true);
  single.set(1, 2, true);
  Mask out2 = largest_component(single);
  CHECK(out2.on == single.on);
}

TEST_CASE("diagonal neighbours join under 8-connectivity") {
  Mask m = Mask::zeros(6, 6);
  m.set(0, 0, true);
  m.set(1, 1, true);
  m.set(2, 2, true);
  m.set(4, 5, true);  // far away single pixel
  Mask out = largest_component(m);
  CHECK(out.count() == 3);
  CHECK(out.at(0, 0));
  CHECK(out.at(1, 1));
  CHECK(out.at(2, 2));
}

TEST_CASE("largest_component agrees with the flood-fill oracle and is idempotent") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Mask m = Mask::zeros(16, 20);
    for (size_t i = 0; i < m.on.size(); ++i) m.on[i] = rng.bernoulli(0.35) ? 1 : 0;
    Mask a = largest_component(m);
    Mask b = flood_largest(m);
    CHECK(a.on == b.on);
    Mask again = largest_component(a);
    CHECK(again.on == a.on);
  }
}

TEST_CASE("largest_component of an empty mask stays empty") {
  Mask m = Mask::zeros(5, 5);
  CHECK(largest_component(m).count() == 0);
}

TEST_CASE("min_bbox basics and the scatter oracle") {
  Mask m = Mask::zeros(10, 12);
  m.set(3, 7, true);
  BoundingBox b = min_bbox(m);
  CHECK(b == BoundingBox{7, 3, 8, 4});
  CHECK(b.area() == 1);

  Mask full = Mask::zeros(6, 9);
  for (auto& v : full.on) v = 1;
  CHECK(min_bbox(full) == BoundingBox{0, 0, 9, 6});

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Mask s = Mask::zeros(15, 18);
    int x0 = 18, y0 = 15, x1 = -1, y1 = -1;
    for (int i = 0; i < 12; ++i) {
      const int y = rng.uniform_int(0, 14), x = rng.uniform_int(0, 17);
      s.set(y, x, true);
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
    CHECK(min_bbox(s) == BoundingBox{x0, y0, x1 + 1, y1 + 1});
  }

  CHECK_THROWS_AS(min_bbox(Mask::zeros(3, 3)), invalid_argument_error);
}

TEST_CASE("min_bbox of the largest component is contained in min_bbox of the mask") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Mask m = Mask::zeros(12, 12);
    for (size_t i = 0; i < m.on.size(); ++i) m.on[i] = rng.bernoulli(0.3) ? 1 : 0;
    if (m.empty()) continue;
    BoundingBox outer = min_bbox(m);
    BoundingBox inner = min_bbox(largest_component(m));
    CHECK(inner.x0 >= outer.x0);
    CHECK(inner.y0 >= outer.y0);
    CHECK(inner.x1 <= outer.x1);
    CHECK(inner.y1 <= outer.y1);
  }
}

TEST_CASE("iou: identity, disjoint, partial overlap, symmetry, translation") {
  BoundingBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, BoundingBox{20, 20, 30, 30}) == doctest::Approx(0.0));
  BoundingBox b{5, 0, 15, 10};
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3));
  CHECK(iou(b, a) == doctest::Approx(iou(a, b)));

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    BoundingBox p{rng.uniform_int(0, 20), rng.uniform_int(0, 20), 0, 0};
    p.x1 = p.x0 + rng.uniform_int(1, 15);
    p.y1 = p.y0 + rng.uniform_int(1, 15);
    BoundingBox q{rng.uniform_int(0, 20), rng.uniform_int(0, 20), 0, 0};
    q.x1 = q.x0 + rng.uniform_int(1, 15);
    q.y1 = q.y0 + rng.uniform_int(1, 15);
    const double base = iou(p, q);
    CHECK(iou(q, p) == doctest::Approx(base));
    const int dx = rng.uniform_int(-5, 5), dy = rng.uniform_int(-5, 5);
    BoundingBox pt{p.x0 + dx, p.y0 + dy, p.x1 + dx, p.y1 + dy};
    BoundingBox qt{q.x0 + dx, q.y0 + dy, q.x1 + dx, q.y1 + dy};
    CHECK(iou(pt, qt) == doctest::Approx(base));
    CHECK((iou(p, q) == 1.0) == (p == q));
  }
}

TEST_CASE("default sign table groups the synthetic taxonomy") {
  ClassSignTable t = default_sign_table();
  REQUIRE(t.size() == 13);
  for (int k = 0; k < 4; ++k) CHECK(t[size_t(k)] == SignMode::PositiveOnly);
  for (int k = 4; k < 8; ++k) CHECK(t[size_t(k)] == SignMode::NegativeOnly);
  for (int k = 8; k < 13; ++k) CHECK(t[size_t(k)] == SignMode::Both);
}

TEST_CASE("threshold then component then box finds a planted Gaussian bump") {
  // synthetic confidence map: a smooth bump plus low background ripple
  Tensor cm({64, 80});
  Rng rng(19);
  const int cy = 30, cx = 50;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 80; ++x) {
      const double r2 = double(y - cy) * (y - cy) + double(x - cx) * (x - cx);
      cm.at(y, x) = float(std::exp(-r2 / (2 * 8.0 * 8.0)) + 0.02 * rng.next_double());
    }
  const float t = isodata_threshold(cm);
  Mask mask = threshold_mask(cm, t);
  REQUIRE_FALSE(mask.empty());
  BoundingBox box = min_bbox(largest_component(mask));
  // the recovered box contains the bump centre and sits near its support
  CHECK(box.x0 < cx);
  CHECK(box.x1 > cx);
  CHECK(box.y0 < cy);
  CHECK(box.y1 > cy);
  BoundingBox support{cx - 12, cy - 12, cx + 13, cy + 13};
  CHECK(iou(box, support) >= 0.5);
}

TEST_CASE("localize returns no box for a constant confidence map") {
  // zero input through a zero-bias ReLU net: all-zero saliency and confidence
  NetworkSpec s;
  s.name = "relu-nobn";
  s.num_classes = 2;
  s.layers = {LayerSpec::conv_relu(3, 4), LayerSpec::maxpool(),
              LayerSpec::conv_linear(1, 2)};
  s.validate();
  Network net = Network::init(s, 3);
  Tensor img({1, 16, 16});
  LocalizeResult r = localize(net, img, 0, default_sign_table(2));
  CHECK_FALSE(r.box.has_value());
  for (size_t i = 0; i < r.confidence.values.numel(); ++i)
    CHECK(r.confidence.values[i] == 0.f);
}

TEST_CASE("localize output is deterministic given weights and image") {
  Network net = Network::init(testutil::tiny_bn_spec(3), 23);
  Rng rng(29);
  Tensor img = random_tensor({1, 16, 16}, rng);
  LocalizeResult a = localize(net, img, 1, default_sign_table(3));
  LocalizeResult b = localize(net, img, 1, default_sign_table(3));
  CHECK(a.box.has_value() == b.box.has_value());
  if (a.box) CHECK(*a.box == *b.box);
  for (size_t i = 0; i < a.confidence.values.numel(); ++i)
    CHECK(a.confidence.values[i] == b.confidence.values[i]);
}
