#include "sononet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "sononet/pgm.hpp"

namespace sononet {

namespace {

constexpr float kPi = 3.14159265358979323846f;
constexpr float kEdge = 1.6f;         // soft edge width, pixels
constexpr float kBase = 0.42f;        // background base intensity
constexpr float kSpeckleAmp = 0.08f;  // multiplicative, per noise level
constexpr float kGaussStd = 0.015f;   // additive, per noise level

float deg2rad(float d) { return d * kPi / 180.f; }

// ------------------------------------------------------------- primitives

enum class Shape { Disc, Ring, Bar, Arc, Ellipse };

// One primitive in template coordinates. delta is the intensity offset it
// contributes (positive bright, negative dark).
struct Part {
  Shape shape = Shape::Disc;
  float cx = 0, cy = 0;
  float a = 10, b = 10;      // radius / half-extents
  float thick = 6;           // ring and arc thickness
  float ang0 = 0, ang1 = 0;  // arc range, radians
  float rot = 0;             // radians
  float delta = 0.4f;
};

float sdf(const Part& p, float u, float v) {
  // rotate into the part frame
  const float cr = std::cos(-p.rot), sr = std::sin(-p.rot);
  const float x = cr * (u - p.cx) - sr * (v - p.cy);
  const float y = sr * (u - p.cx) + cr * (v - p.cy);
  switch (p.shape) {
    case Shape::Disc:
      return std::sqrt(x * x + y * y) - p.a;
    case Shape::Ring:
      return std::fabs(std::sqrt(x * x + y * y) - p.a) - p.thick * 0.5f;
    case Shape::Bar: {
      const float dx = std::fabs(x) - p.a, dy = std::fabs(y) - p.b;
      if (dx > 0 && dy > 0) return std::sqrt(dx * dx + dy * dy);
      return std::max(dx, dy);
    }
    case Shape::Arc: {
      float ang = std::atan2(y, x);
      if (ang < 0) ang += 2 * kPi;
      if (ang >= p.ang0 && ang <= p.ang1)
        return std::fabs(std::sqrt(x * x + y * y) - p.a) - p.thick * 0.5f;
      const float e0x = p.a * std::cos(p.ang0), e0y = p.a * std::sin(p.ang0);
      const float e1x = p.a * std::cos(p.ang1), e1y = p.a * std::sin(p.ang1);
      const float d0 = std::hypot(x - e0x, y - e0y);
      const float d1 = std::hypot(x - e1x, y - e1y);
      return std::min(d0, d1) - p.thick * 0.5f;
    }
    case Shape::Ellipse: {
      const float q = std::sqrt((x / p.a) * (x / p.a) + (y / p.b) * (y / p.b));
      return (q - 1.f) * std::min(p.a, p.b);
    }
  }
  return 1e9f;
}

// Outer boundary samples in template coordinates, used for analytic bounds.
std::vector<std::pair<float, float>> boundary(const Part& p) {
  std::vector<std::pair<float, float>> pts;
  auto rot_push = [&](float x, float y) {
    const float cr = std::cos(p.rot), sr = std::sin(p.rot);
    pts.emplace_back(p.cx + cr * x - sr * y, p.cy + sr * x + cr * y);
  };
  switch (p.shape) {
    case Shape::Disc:
      for (int i = 0; i < 64; ++i)
        rot_push(p.a * std::cos(2 * kPi * i / 64.f), p.a * std::sin(2 * kPi * i / 64.f));
      break;
    case Shape::Ring: {
      const float r = p.a + p.thick * 0.5f;
      for (int i = 0; i < 64; ++i)
        rot_push(r * std::cos(2 * kPi * i / 64.f), r * std::sin(2 * kPi * i / 64.f));
      break;
    }
    case Shape::Bar:
      for (float sx : {-1.f, 1.f})
        for (float sy : {-1.f, 1.f}) rot_push(sx * p.a, sy * p.b);
      break;
    case Shape::Arc: {
      const float ro = p.a + p.thick * 0.5f, ri = p.a - p.thick * 0.5f;
      for (int i = 0; i <= 48; ++i) {
        const float ang = p.ang0 + (p.ang1 - p.ang0) * float(i) / 48.f;
        rot_push(ro * std::cos(ang), ro * std::sin(ang));
        rot_push(ri * std::cos(ang), ri * std::sin(ang));
      }
      break;
    }
    case Shape::Ellipse:
      for (int i = 0; i < 64; ++i)
        rot_push(p.a * std::cos(2 * kPi * i / 64.f), p.b * std::sin(2 * kPi * i / 64.f));
      break;
  }
  return pts;
}

// ------------------------------------------------------------- templates

// 13 composite structures. Bright classes 0-3, dark 4-7, mixed 8-12. Mixed
// templates keep a dominant polarity so the structure shifts the local mean
// away from the background level.
std::vector<Part> class_template(int class_id) {
  const float B = 0.42f;   // bright delta
  const float D = -0.34f;  // dark delta
  switch (class_id) {
    case 0:  // bright ring with horizontal midline bar
      return {{Shape::Ring, 0, 0, 38, 38, 10, 0, 0, 0, B},
              {Shape::Bar, 0, 0, 26, 5, 6, 0, 0, 0, 0.38f}};
    case 1:  // bright ladder: two uprights, two rungs
      return {{Shape::Bar, -22, 0, 34, 6, 6, 0, 0, deg2rad(90), B},
              {Shape::Bar, 22, 0, 34, 6, 6, 0, 0, deg2rad(90), B},
              {Shape::Bar, 0, -16, 20, 5, 6, 0, 0, 0, B},
              {Shape::Bar, 0, 16, 20, 5, 6, 0, 0, 0, B}};
    case 2:  // bright open arc with centre dot
      return {{Shape::Arc, 0, 0, 36, 36, 11, deg2rad(50), deg2rad(310), 0, B},
              {Shape::Disc, 0, 0, 11, 11, 0, 0, 0, 0, B}};
    case 3:  // four bright discs
      return {{Shape::Disc, -15, -15, 13, 13, 0, 0, 0, 0, B},
              {Shape::Disc, 15, -15, 13, 13, 0, 0, 0, 0, B},
              {Shape::Disc, -15, 15, 13, 13, 0, 0, 0, 0, B},
              {Shape::Disc, 15, 15, 13, 13, 0, 0, 0, 0, B}};
    case 4:  // four dark chambers
      return {{Shape::Disc, -16, -16, 14, 14, 0, 0, 0, 0, D},
              {Shape::Disc, 16, -16, 14, 14, 0, 0, 0, 0, D},
              {Shape::Disc, -16, 16, 14, 14, 0, 0, 0, 0, D},
              {Shape::Disc, 16, 16, 14, 14, 0, 0, 0, 0, D}};
    case 5:  // dark ring with dark core
      return {{Shape::Ring, 0, 0, 34, 34, 12, 0, 0, 0, D},
              {Shape::Disc, 0, 0, 10, 10, 0, 0, 0, 0, D}};
    case 6:  // dark X
      return {{Shape::Bar, 0, 0, 38, 7, 6, 0, 0, deg2rad(45), D},
              {Shape::Bar, 0, 0, 38, 7, 6, 0, 0, deg2rad(-45), D}};
    case 7:  // dark open arc with vertical chord
      return {{Shape::Arc, 0, 0, 34, 34, 10, deg2rad(50), deg2rad(310), deg2rad(180), D},
              {Shape::Bar, 16, 0, 24, 5, 6, 0, 0, deg2rad(90), D}};
    case 8:  // bright ring, dark core
      return {{Shape::Ring, 0, 0, 36, 36, 12, 0, 0, 0, B},
              {Shape::Disc, 0, 0, 14, 14, 0, 0, 0, 0, -0.30f}};
    case 9:  // bright plate with dark slash
      return {{Shape::Ellipse, 0, 0, 40, 26, 0, 0, 0, 0, 0.36f},
              {Shape::Bar, 0, 0, 30, 5, 6, 0, 0, deg2rad(25), -0.30f}};
    case 10:  // dark ring, bright core
      return {{Shape::Ring, 0, 0, 34, 34, 13, 0, 0, 0, D},
              {Shape::Disc, 0, 0, 11, 11, 0, 0, 0, 0, B}};
    case 11:  // thick bright bar over thin dark bar
      return {{Shape::Bar, 0, -14, 34, 11, 6, 0, 0, 0, 0.40f},
              {Shape::Bar, 0, 14, 34, 6, 6, 0, 0, 0, -0.32f}};
    case 12:  // dark plate with offset bright dot
      return {{Shape::Ellipse, 0, 0, 38, 25, 0, 0, 0, 0, -0.32f},
              {Shape::Disc, 10, 0, 10, 10, 0, 0, 0, 0, B}};
    default:
      throw invalid_argument_error("class id " + std::to_string(class_id) +
                                   " out of range [0," + std::to_string(kForegroundClasses) +
                                   ")");
  }
}

// Template boundary transformed by (scale, rotation, centre), in pixels.
std::vector<std::pair<float, float>> transformed_boundary(const SceneParams& sp) {
  std::vector<std::pair<float, float>> out;
  const float cr = std::cos(deg2rad(sp.rotation_deg)), sr = std::sin(deg2rad(sp.rotation_deg));
  for (const Part& part : class_template(sp.class_id))
    for (auto [x, y] : boundary(part)) {
      const float xs = x * sp.scale, ys = y * sp.scale;
      out.emplace_back(sp.cx + cr * xs - sr * ys, sp.cy + sr * xs + cr * ys);
    }
  return out;
}

struct Extent {
  float x0, y0, x1, y1;
};

Extent bound_of(const std::vector<std::pair<float, float>>& pts, float pad) {
  Extent e{1e9f, 1e9f, -1e9f, -1e9f};
  for (auto [x, y] : pts) {
    e.x0 = std::min(e.x0, x - pad);
    e.y0 = std::min(e.y0, y - pad);
    e.x1 = std::max(e.x1, x + pad);
    e.y1 = std::max(e.y1, y + pad);
  }
  return e;
}

BoundingBox clamp_to_canvas(const Extent& e) {
  BoundingBox b;
  b.x0 = std::max(0, int(std::floor(e.x0)));
  b.y0 = std::max(0, int(std::floor(e.y0)));
  b.x1 = std::min(kCanvasWidth, int(std::ceil(e.x1)) + 1);
  b.y1 = std::min(kCanvasHeight, int(std::ceil(e.y1)) + 1);
  return b;
}

// ------------------------------------------------------------- rendering

// Two-octave value noise on coarse grids, bilinearly interpolated.
struct TextureField {
  static constexpr int gh1 = 8, gw1 = 10, gh2 = 15, gw2 = 19;
  std::vector<float> g1, g2;

  explicit TextureField(Rng& rng) {
    g1.resize(size_t(gh1) * gw1);
    g2.resize(size_t(gh2) * gw2);
    for (auto& v : g1) v = rng.uniform(-0.05f, 0.05f);
    for (auto& v : g2) v = rng.uniform(-0.025f, 0.025f);
  }

  static float bilerp(const std::vector<float>& g, int gh, int gw, float fy, float fx) {
    const float yy = fy * float(gh - 1), xx = fx * float(gw - 1);
    const int y0 = std::min(int(yy), gh - 2), x0 = std::min(int(xx), gw - 2);
    const float ty = yy - float(y0), tx = xx - float(x0);
    const float a = g[size_t(y0) * gw + x0], b = g[size_t(y0) * gw + x0 + 1];
    const float c = g[size_t(y0 + 1) * gw + x0], d = g[size_t(y0 + 1) * gw + x0 + 1];
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
  }

  float at(int y, int x) const {
    const float fy = float(y) / float(kCanvasHeight - 1);
    const float fx = float(x) / float(kCanvasWidth - 1);
    return bilerp(g1, gh1, gw1, fy, fx) + bilerp(g2, gh2, gw2, fy, fx);
  }
};

float coverage(float d) {
  const float v = 0.5f - d / kEdge;
  return v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
}

// Stamp one part (with a standalone pixel-space transform) onto the canvas.
void stamp(Tensor& img, const Part& part, float cx, float cy, float scale, float rot_rad) {
  Extent e{1e9f, 1e9f, -1e9f, -1e9f};
  const float cr = std::cos(rot_rad), sr = std::sin(rot_rad);
  for (auto [x, y] : boundary(part)) {
    const float xs = x * scale, ys = y * scale;
    const float px = cx + cr * xs - sr * ys, py = cy + sr * xs + cr * ys;
    e.x0 = std::min(e.x0, px);
    e.y0 = std::min(e.y0, py);
    e.x1 = std::max(e.x1, px);
    e.y1 = std::max(e.y1, py);
  }
  const int x0 = std::max(0, int(e.x0 - kEdge - 1));
  const int x1 = std::min(kCanvasWidth - 1, int(e.x1 + kEdge + 1));
  const int y0 = std::max(0, int(e.y0 - kEdge - 1));
  const int y1 = std::min(kCanvasHeight - 1, int(e.y1 + kEdge + 1));
  const float inv_scale = 1.f / scale;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const float dx = float(x) - cx, dy = float(y) - cy;
      const float u = (cr * dx + sr * dy) * inv_scale;
      const float v = (-sr * dx + cr * dy) * inv_scale;
      const float d_px = sdf(part, u, v) * scale;
      const float cov = coverage(d_px);
      if (cov > 0.f) img.at(0, y, x) += part.delta * cov;
    }
}

// Weak single-primitive distractor; the vocabulary never assembles a full
// class template.
Part draw_distractor(Rng& rng) {
  Part p;
  const int kind = rng.uniform_int(0, 2);
  p.shape = kind == 0 ? Shape::Disc : (kind == 1 ? Shape::Bar : Shape::Ring);
  if (p.shape == Shape::Disc) {
    p.a = rng.uniform(8.f, 16.f);
  } else if (p.shape == Shape::Bar) {
    p.a = rng.uniform(15.f, 30.f);
    p.b = rng.uniform(4.f, 8.f);
    p.rot = rng.uniform(0.f, kPi);
  } else {
    p.a = rng.uniform(15.f, 26.f);
    p.thick = rng.uniform(6.f, 9.f);
  }
  const float mag = rng.uniform(0.08f, 0.20f);
  p.delta = rng.bernoulli(0.5) ? mag : -mag;
  return p;
}

float distractor_radius(const Part& p) {
  if (p.shape == Shape::Bar) return std::hypot(p.a, p.b);
  return p.a + p.thick * 0.5f;
}

void add_noise(Tensor& img, float level, Rng& rng) {
  const float amp = kSpeckleAmp * level;
  const float astd = kGaussStd * level;
  for (size_t i = 0; i < img.numel(); ++i) {
    float v = img[i];
    v *= 1.f + amp * (2.f * rng.next_float() - 1.f);
    v += astd * rng.normal();
    img[i] = v < 0.02f ? 0.02f : (v > 0.98f ? 0.98f : v);
  }
}

}  // namespace

float noise_std(float level) {
  const float m = kSpeckleAmp * level * kBase;
  const float a = kGaussStd * level;
  return std::sqrt(m * m / 3.f + a * a);
}

BoundingBox analytic_bound(const SceneParams& sp) {
  return clamp_to_canvas(bound_of(transformed_boundary(sp), kEdge + 1.f));
}

SceneParams draw_scene_params(int class_id, Rng& rng) {
  if (class_id < 0 || class_id >= kForegroundClasses)
    throw invalid_argument_error("class id " + std::to_string(class_id) + " out of range [0," +
                                 std::to_string(kForegroundClasses) + ")");
  SceneParams sp;
  sp.class_id = class_id;
  sp.scale = rng.uniform(0.7f, 1.3f);
  sp.rotation_deg = rng.uniform(-25.f, 25.f);
  // centre range keeps the transformed structure fully inside the canvas
  SceneParams probe = sp;
  probe.cx = 0;
  probe.cy = 0;
  const Extent e = bound_of(transformed_boundary(probe), kEdge + 1.f);
  const float hx = std::max(-e.x0, e.x1), hy = std::max(-e.y0, e.y1);
  const float margin = 8.f;
  sp.cx = rng.uniform(hx + margin, float(kCanvasWidth) - hx - margin);
  sp.cy = rng.uniform(hy + margin, float(kCanvasHeight) - hy - margin);
  sp.texture_seed = rng.next_u64();
  sp.distractor_count = rng.uniform_int(1, 3);
  return sp;
}

Render render_scene(const SceneParams& sp) {
  Rng rng = Rng::stream(sp.texture_seed, 0x7e47);
  Tensor img({1, kCanvasHeight, kCanvasWidth});
  const TextureField tex(rng);
  for (int y = 0; y < kCanvasHeight; ++y)
    for (int x = 0; x < kCanvasWidth; ++x) img.at(0, y, x) = kBase + tex.at(y, x);

  const BoundingBox gt = analytic_bound(sp);

  // distractors stay clear of the structure box
  for (int i = 0; i < sp.distractor_count; ++i) {
    const Part d = draw_distractor(rng);
    const float r = distractor_radius(d) + kEdge;
    for (int attempt = 0; attempt < 40; ++attempt) {
      const float dx = rng.uniform(r + 2.f, float(kCanvasWidth) - r - 2.f);
      const float dy = rng.uniform(r + 2.f, float(kCanvasHeight) - r - 2.f);
      const float clearance = 14.f;
      if (dx + r > float(gt.x0) - clearance && dx - r < float(gt.x1) + clearance &&
          dy + r > float(gt.y0) - clearance && dy - r < float(gt.y1) + clearance)
        continue;
      stamp(img, d, dx, dy, 1.f, 0.f);
      break;
    }
  }

  const float rot = deg2rad(sp.rotation_deg);
  for (const Part& part : class_template(sp.class_id))
    stamp(img, part, sp.cx, sp.cy, sp.scale, rot);

  add_noise(img, sp.noise_level, rng);
  return {std::move(img), gt};
}

Render gen_plane(int class_id, Rng& rng) {
  return render_scene(draw_scene_params(class_id, rng));
}

Tensor gen_background(Rng& rng) {
  const uint64_t seed = rng.next_u64();
  Rng r = Rng::stream(seed, 0xb4c6);
  Tensor img({1, kCanvasHeight, kCanvasWidth});
  const TextureField tex(r);
  for (int y = 0; y < kCanvasHeight; ++y)
    for (int x = 0; x < kCanvasWidth; ++x) img.at(0, y, x) = kBase + tex.at(y, x);
  const int n = r.uniform_int(0, 4);
  for (int i = 0; i < n; ++i) {
    const Part d = draw_distractor(r);
    const float rad = distractor_radius(d) + kEdge;
    const float dx = r.uniform(rad + 2.f, float(kCanvasWidth) - rad - 2.f);
    const float dy = r.uniform(rad + 2.f, float(kCanvasHeight) - rad - 2.f);
    stamp(img, d, dx, dy, 1.f, 0.f);
  }
  add_noise(img, 1.f, r);
  return img;
}

// ------------------------------------------------------------- dataset

Dataset gen_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (cfg.n_cases < 2 || cfg.per_class_count < 1)
    throw invalid_argument_error("gen_dataset: need >= 2 cases and >= 1 image per class");

  // deterministic case-level split
  std::vector<int> case_order(size_t(cfg.n_cases));
  for (int i = 0; i < cfg.n_cases; ++i) case_order[size_t(i)] = i;
  Rng split_rng = Rng::stream(cfg.seed, 0x517);
  split_rng.shuffle(case_order);
  const int n_train = int(std::llround(cfg.train_fraction * double(cfg.n_cases)));
  std::vector<bool> is_train(size_t(cfg.n_cases), false);
  for (int i = 0; i < n_train; ++i) is_train[size_t(case_order[size_t(i)])] = true;

  // spread class instances over cases: exact per-class totals, each case a
  // pseudo-random subset
  std::vector<std::vector<int>> case_classes(size_t(cfg.n_cases));
  Rng assign_rng = Rng::stream(cfg.seed, 0xa551);
  for (int cls = 0; cls < kForegroundClasses; ++cls)
    for (int j = 0; j < cfg.per_class_count; ++j)
      case_classes[size_t(assign_rng.uniform_int(0, cfg.n_cases - 1))].push_back(cls);

  Dataset ds;
  fs::create_directories(fs::path(out_dir) / "images");
  char buf[160];

  for (int ci = 0; ci < cfg.n_cases; ++ci) {
    std::snprintf(buf, sizeof(buf), "case%03d", ci);
    const std::string case_id = buf;
    fs::create_directories(fs::path(out_dir) / "images" / case_id);
    Rng rng = Rng::stream(cfg.seed, 0xc0de0000ull + uint64_t(ci));
    Manifest& target = is_train[size_t(ci)] ? ds.train : ds.test;

    int img_idx = 0;
    auto emit = [&](const Tensor& image, int cls, std::optional<BoundingBox> box) {
      std::snprintf(buf, sizeof(buf), "images/%s/img%05d_c%02d.pgm", case_id.c_str(), img_idx,
                    cls);
      ++img_idx;
      const std::string rel = buf;
      write_pgm((fs::path(out_dir) / rel).string(), image);
      target.records.push_back({rel, cls, case_id, box});
    };

    int fg_count = 0;
    for (int cls : case_classes[size_t(ci)]) {
      SceneParams sp = draw_scene_params(cls, rng);
      sp.noise_level = cfg.noise_level;
      Render r = render_scene(sp);
      emit(r.image, cls, r.gt);
      ++fg_count;
    }
    const double ratio =
        is_train[size_t(ci)] ? cfg.train_background_per_fg : cfg.background_ratio;
    const int bg_count = int(std::llround(ratio * double(fg_count)));
    for (int i = 0; i < bg_count; ++i) emit(gen_background(rng), kBackgroundClass, std::nullopt);
  }

  // the training manifest carries labels only; boxes go to the eval file
  for (auto& r : ds.train.records) r.box.reset();
  save_manifest(ds.train, (fs::path(out_dir) / "train_manifest.tsv").string());
  save_manifest(ds.test, (fs::path(out_dir) / "test_manifest.tsv").string());
  save_boxes(ds.test, (fs::path(out_dir) / "eval_boxes.tsv").string());
  return ds;
}

// ------------------------------------------------------------- videos

Video gen_video(const VideoSpec& spec) {
  if (spec.n_frames < 100)
    throw invalid_argument_error("gen_video: need at least 100 frames, got " +
                                 std::to_string(spec.n_frames));
  for (int cls : spec.class_ids)
    if (cls < 0 || cls >= kForegroundClasses)
      throw invalid_argument_error("gen_video: class id " + std::to_string(cls) +
                                   " out of range");
  Video v;
  v.spec = spec;
  if (spec.class_ids.empty()) return v;

  Rng rng = Rng::stream(spec.seed, 0x71de0);
  std::vector<int> order = spec.class_ids;
  rng.shuffle(order);

  const int n = int(order.size());
  const int block = spec.n_frames / n;
  // dwell budget stays under 8% of the video so background dominates
  const int len_hi = std::clamp(spec.n_frames * 8 / (100 * n), 5, 14);
  const int len_lo = std::min(8, len_hi);
  for (int i = 0; i < n; ++i) {
    Video::Dwell d;
    const int len = rng.uniform_int(len_lo, len_hi);
    const int lo = i * block + std::max(1, block / 8);
    const int hi = (i + 1) * block - std::max(1, block / 8) - len;
    const int start = rng.uniform_int(lo, std::max(lo, hi));
    d.span = {order[size_t(i)], start, start + len - 1};
    d.base = draw_scene_params(order[size_t(i)], rng);
    d.base.noise_level = spec.noise_level;
    d.dcx = rng.uniform(-0.7f, 0.7f);
    d.dcy = rng.uniform(-0.7f, 0.7f);
    d.dscale = rng.uniform(-0.004f, 0.004f);
    d.drot = rng.uniform(-0.25f, 0.25f);
    v.dwells.push_back(d);
    v.spans.push_back(d.span);
  }
  return v;
}

Tensor Video::frame(int idx) const {
  if (idx < 0 || idx >= spec.n_frames)
    throw invalid_argument_error("video frame " + std::to_string(idx) + " out of range [0," +
                                 std::to_string(spec.n_frames) + ")");
  for (const auto& d : dwells) {
    if (idx < d.span.first || idx > d.span.last) continue;
    const float t = float(idx - d.span.first) - 0.5f * float(d.span.last - d.span.first);
    SceneParams sp = d.base;
    sp.cx += d.dcx * t;
    sp.cy += d.dcy * t;
    sp.scale = std::clamp(sp.scale + d.dscale * t, 0.65f, 1.35f);
    sp.rotation_deg += d.drot * t;
    sp.texture_seed = d.base.texture_seed ^ (0x9e3779b97f4a7c15ull * uint64_t(idx + 1));
    return render_scene(sp).image;
  }
  Rng rng = Rng::stream(spec.seed ^ 0x71d, uint64_t(idx));
  return gen_background(rng);
}

void write_video(const Video& v, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  char buf[64];
  for (int i = 0; i < v.spec.n_frames; ++i) {
    std::snprintf(buf, sizeof(buf), "frame%06d.pgm", i);
    write_pgm((fs::path(dir) / buf).string(), v.frame(i));
  }
  std::ofstream track(fs::path(dir) / "track.tsv", std::ios::trunc);
  if (!track) throw data_error("cannot write track in " + dir);
  for (const auto& s : v.spans)
    for (int f = s.first; f <= s.last; ++f) track << f << "\t" << s.class_id << "\n";
}

std::vector<ClassSpan> load_video_track(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot open track: " + path);
  std::map<int, std::pair<int, int>> ranges;  // class -> [min,max] frame
  int frame = 0, cls = 0;
  while (f >> frame >> cls) {
    auto it = ranges.find(cls);
    if (it == ranges.end())
      ranges[cls] = {frame, frame};
    else {
      it->second.first = std::min(it->second.first, frame);
      it->second.second = std::max(it->second.second, frame);
    }
  }
  std::vector<ClassSpan> spans;
  for (const auto& [c, r] : ranges) spans.push_back({c, r.first, r.second});
  return spans;
}

}  // namespace sononet
