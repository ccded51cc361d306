#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sononet/localizer.hpp"
#include "sononet/manifest.hpp"
#include "sononet/netdef.hpp"
#include "sononet/synthdata.hpp"

namespace sononet {

// ------------------------------------------------------------- metrics

struct PerClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  int support = 0;
};

struct MetricsReport {
  int num_classes = 0;
  std::vector<PerClassMetrics> per_class;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;  // unweighted
  std::vector<std::vector<int>> confusion;                     // [true][pred]
  int total = 0, correct = 0;

  double accuracy() const { return total ? double(correct) / total : 0.0; }
};

double f1_score(double precision, double recall);

MetricsReport compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                              int num_classes);

// Argmax-confidence prediction per manifest image.
MetricsReport evaluate(const Network& net, const Manifest& manifest, const std::string& root,
                       int batch_size = 8);

std::string metrics_csv(const MetricsReport& r);
std::string confusion_csv(const MetricsReport& r);
void print_metrics(const MetricsReport& r, std::ostream& os);

// ------------------------------------------------------------- annotate

struct Annotation {
  int class_id = 0;
  float confidence = 0.f;
  std::optional<BoundingBox> box;
};

// Frame is a raw [1,224,288] image in [0,1]; normalisation happens inside.
// The box is only computed for foreground predictions when requested.
Annotation annotate(const Network& net, const Tensor& frame, bool with_box,
                    const ClassSignTable& sign_table);

// ------------------------------------------------------------- retrieval

struct RetrievalResult {
  int n_frames = 0;
  Tensor confidence_track;       // [n_frames, K]
  std::vector<int> best_frame;   // per foreground class
  std::vector<float> best_confidence;
};

RetrievalResult retrieve(const Network& net, int n_frames,
                         const std::function<Tensor(int)>& frame_at);

struct RetrievalScore {
  int pairs = 0;    // classes with an annotated span
  int correct = 0;  // best frame inside the span
  double accuracy = 0;
  std::vector<std::pair<int, bool>> per_class;  // (class, correct)
};

RetrievalScore score_retrieval(const RetrievalResult& r, const std::vector<ClassSpan>& spans);
std::string retrieval_csv(const RetrievalResult& r, const std::vector<ClassSpan>& spans);

// ------------------------------------------------------------- localisation

struct LocalizationRow {
  std::string image;
  int class_id = 0;
  std::optional<BoundingBox> box;
  std::optional<BoundingBox> gt;
  double iou_value = 0;
  bool correct = false;  // iou >= 0.5; empty box counts incorrect
};

struct LocalizationReport {
  std::vector<LocalizationRow> rows;
  int total = 0, correct = 0;
  double accuracy = 0, mean_iou = 0;
};

constexpr double kIouCorrect = 0.5;

// Runs the localisation pipeline with the true class on every foreground
// record that carries a ground-truth box.
LocalizationReport evaluate_localization(const Network& net, const Manifest& manifest,
                                         const std::string& root,
                                         const ClassSignTable& sign_table);

// CSV "image_id,class_id,x0,y0,x1,y1,iou,correct".
std::string localization_csv(const LocalizationReport& r);

// ------------------------------------------------------------- benchmark

struct BenchRow {
  std::string arch;
  double detection_fps = 0;     // forward pass only
  double localisation_fps = 0;  // saliency backward + box extraction only
  double combined_fps = 0;      // forward + localisation per frame
};

struct BenchReport {
  std::vector<BenchRow> rows;
  int frames = 0, warmup = 0;
  int batch = 1;  // single frame at a time: the live-scanning scenario
};

// Wall-clock timing with randomly initialised weights; strictly serial.
BenchReport bench(const std::vector<std::string>& archs, int n_frames, int warmup,
                  uint64_t seed = 1);

std::string bench_csv(const BenchReport& r);
void print_bench(const BenchReport& r, std::ostream& os);

}  // namespace sononet
