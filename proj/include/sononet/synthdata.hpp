#pragma once

#include <string>
#include <vector>

#include "sononet/geometry.hpp"
#include "sononet/manifest.hpp"
#include "sononet/rng.hpp"
#include "sononet/tensor.hpp"

namespace sononet {

// Canvas matches the cropped scanner field of view the networks are built
// around: 14x18 class score maps after /16 downsampling.
constexpr int kCanvasHeight = 224;
constexpr int kCanvasWidth = 288;
constexpr int kForegroundClasses = 13;
constexpr int kBackgroundClass = 13;
constexpr int kNumClasses = 14;

// Everything needed to render one scene deterministically.
struct SceneParams {
  int class_id = 0;
  float cx = 0.f, cy = 0.f;   // structure centre, pixels
  float scale = 1.f;          // [0.7, 1.3]
  float rotation_deg = 0.f;   // [-25, 25]
  uint64_t texture_seed = 0;  // background texture, speckle and distractors
  int distractor_count = 0;
  float noise_level = 1.f;
};

struct Render {
  Tensor image;  // [1,224,288], values in [0,1]
  BoundingBox gt;
};

// Per-pixel standard deviation of the speckle + additive noise at a given
// level; the seed for intensity-separation checks.
float noise_std(float level);

// Foreground scene: a class-specific composite structure on textured speckle,
// plus 1-3 weak single-primitive distractors away from the structure.
// Classes 0-3 are bright-on-dark, 4-7 dark-on-bright, 8-12 mixed polarity.
SceneParams draw_scene_params(int class_id, Rng& rng);
Render render_scene(const SceneParams& params);
Render gen_plane(int class_id, Rng& rng);

// The axis-aligned bound the renderer will report for these parameters.
BoundingBox analytic_bound(const SceneParams& params);

// Background frame: texture plus 0-4 weak distractor primitives that never
// assemble a full class template. Carries no ground-truth box.
Tensor gen_background(Rng& rng);

// ---------------------------------------------------------------------------

struct DatasetConfig {
  int n_cases = 25;
  int per_class_count = 250;      // total foreground images per class
  double background_ratio = 24.;  // test cases: background per foreground
  double train_background_per_fg = 1.;  // train cases: background per foreground
  double train_fraction = 0.8;    // case-level split
  uint64_t seed = 7;
  float noise_level = 1.f;
};

struct Dataset {
  Manifest train;  // no boxes (weak supervision)
  Manifest test;   // foreground records carry boxes in memory; on disk the
                   // boxes go to a separate evaluation file
};

// Generates all images under <out_dir>/images/, writes train_manifest.tsv,
// test_manifest.tsv and eval_boxes.tsv. Pure function of the config: the same
// seed reproduces every byte. Per-case rng streams keep parallel and serial
// generation identical.
Dataset gen_dataset(const DatasetConfig& config, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Synthetic probe sweep: long background stretches with one dwell of several
// consecutive frames per class.

struct VideoSpec {
  std::vector<int> class_ids;
  int n_frames = 2000;  // >= 100
  uint64_t seed = 0;
  float noise_level = 1.f;
};

struct ClassSpan {
  int class_id = 0;
  int first = 0, last = 0;  // inclusive frame range
};

struct Video {
  VideoSpec spec;
  std::vector<ClassSpan> spans;  // the annotation track

  // Renders frame idx on demand; pure function of (spec, idx).
  Tensor frame(int idx) const;

  struct Dwell {
    ClassSpan span;
    SceneParams base;
    float dcx = 0.f, dcy = 0.f, dscale = 0.f, drot = 0.f;  // per-frame drift
  };
  std::vector<Dwell> dwells;
};

Video gen_video(const VideoSpec& spec);

// Numbered PGM frames plus the annotation track "frame_idx<TAB>class_id".
void write_video(const Video& video, const std::string& dir);
std::vector<ClassSpan> load_video_track(const std::string& path);

}  // namespace sononet
