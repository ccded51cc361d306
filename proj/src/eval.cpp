#include "sononet/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "sononet/pgm.hpp"
#include "sononet/trainer.hpp"

namespace sononet {

// ------------------------------------------------------------- metrics

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0 ? 2 * precision * recall / s : 0;
}

MetricsReport compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                              int num_classes) {
  if (truth.size() != predicted.size())
    throw invalid_argument_error("compute_metrics: " + std::to_string(truth.size()) +
                                 " labels vs " + std::to_string(predicted.size()) +
                                 " predictions");
  if (truth.empty()) throw invalid_argument_error("compute_metrics: no samples");
  MetricsReport r;
  r.num_classes = num_classes;
  r.confusion.assign(size_t(num_classes), std::vector<int>(size_t(num_classes), 0));
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes)
      throw invalid_argument_error("compute_metrics: class id out of range");
    r.confusion[size_t(truth[i])][size_t(predicted[i])]++;
    ++r.total;
    if (truth[i] == predicted[i]) ++r.correct;
  }
  r.per_class.resize(size_t(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    int tp = r.confusion[size_t(c)][size_t(c)], fp = 0, fn = 0;
    for (int o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += r.confusion[size_t(o)][size_t(c)];
      fn += r.confusion[size_t(c)][size_t(o)];
    }
    auto& pc = r.per_class[size_t(c)];
    pc.support = tp + fn;
    pc.precision = (tp + fp) ? double(tp) / (tp + fp) : 0;
    pc.recall = (tp + fn) ? double(tp) / (tp + fn) : 0;
    pc.f1 = f1_score(pc.precision, pc.recall);
    r.macro_precision += pc.precision;
    r.macro_recall += pc.recall;
    r.macro_f1 += pc.f1;
  }
  r.macro_precision /= num_classes;
  r.macro_recall /= num_classes;
  r.macro_f1 /= num_classes;
  return r;
}

MetricsReport evaluate(const Network& net, const Manifest& manifest, const std::string& root,
                       int batch_size) {
  if (manifest.records.empty()) throw invalid_argument_error("evaluate: empty manifest");
  std::vector<int> truth, preds;
  truth.reserve(manifest.size());
  preds.reserve(manifest.size());
  size_t done = 0;
  while (done < manifest.records.size()) {
    const size_t n = std::min(size_t(batch_size), manifest.records.size() - done);
    Tensor first = read_pgm(root.empty() ? manifest.records[done].path
                                         : root + "/" + manifest.records[done].path);
    const int h = first.extent(1), w = first.extent(2);
    Tensor batch({int(n), 1, h, w});
    for (size_t b = 0; b < n; ++b) {
      Tensor img = b == 0 ? first
                          : read_pgm(root.empty() ? manifest.records[done + b].path
                                                  : root + "/" + manifest.records[done + b].path);
      normalize_image(img);
      std::copy(img.data(), img.data() + img.numel(), batch.data() + b * img.numel());
      truth.push_back(manifest.records[done + b].class_id);
    }
    ForwardResult fr = forward(net, batch);
    preds.insert(preds.end(), fr.predictions.begin(), fr.predictions.end());
    done += n;
  }
  return compute_metrics(truth, preds, net.spec.num_classes);
}

std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "class,precision,recall,f1,support\n";
  char buf[128];
  for (int c = 0; c < r.num_classes; ++c) {
    const auto& pc = r.per_class[size_t(c)];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%d\n", c, pc.precision, pc.recall, pc.f1,
                  pc.support);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "macro,%.6f,%.6f,%.6f,%d\n", r.macro_precision, r.macro_recall,
                r.macro_f1, r.total);
  os << buf;
  return os.str();
}

std::string confusion_csv(const MetricsReport& r) {
  std::ostringstream os;
  for (int t = 0; t < r.num_classes; ++t) {
    for (int p = 0; p < r.num_classes; ++p) {
      if (p) os << ",";
      os << r.confusion[size_t(t)][size_t(p)];
    }
    os << "\n";
  }
  return os.str();
}

void print_metrics(const MetricsReport& r, std::ostream& os) {
  char buf[160];
  os << "class  precision  recall     f1         support\n";
  for (int c = 0; c < r.num_classes; ++c) {
    const auto& pc = r.per_class[size_t(c)];
    std::snprintf(buf, sizeof(buf), "%-6d %-10.3f %-10.3f %-10.3f %d\n", c, pc.precision,
                  pc.recall, pc.f1, pc.support);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "macro  %-10.3f %-10.3f %-10.3f %d samples, accuracy %.4f\n", r.macro_precision,
                r.macro_recall, r.macro_f1, r.total, r.accuracy());
  os << buf;
}

// ------------------------------------------------------------- annotate

Annotation annotate(const Network& net, const Tensor& frame, bool with_box,
                    const ClassSignTable& sign_table) {
  if (frame.rank() != 3 || frame.extent(0) != 1 || frame.extent(1) != kCanvasHeight ||
      frame.extent(2) != kCanvasWidth)
    throw invalid_argument_error("annotate: need a [1," + std::to_string(kCanvasHeight) + "," +
                                 std::to_string(kCanvasWidth) + "] frame, got " +
                                 frame.shape_str());
  Tensor norm = frame;
  normalize_image(norm);
  const Tensor batch = norm.reshaped({1, 1, kCanvasHeight, kCanvasWidth});
  ForwardResult fr = forward(net, batch);
  Annotation a;
  a.class_id = fr.predictions[0];
  a.confidence = fr.confidences.at(0, a.class_id);
  if (with_box && a.class_id < int(sign_table.size()))
    a.box = localize(net, norm, a.class_id, sign_table).box;
  return a;
}

// ------------------------------------------------------------- retrieval

RetrievalResult retrieve(const Network& net, int n_frames,
                         const std::function<Tensor(int)>& frame_at) {
  if (n_frames < 1) throw invalid_argument_error("retrieve: need at least one frame");
  const int k = net.spec.num_classes;
  RetrievalResult r;
  r.n_frames = n_frames;
  r.confidence_track = Tensor({n_frames, k});
  r.best_frame.assign(size_t(k - 1), 0);
  r.best_confidence.assign(size_t(k - 1), -1.f);
  for (int t = 0; t < n_frames; ++t) {
    Tensor frame = frame_at(t);
    normalize_image(frame);
    const Tensor batch =
        frame.reshaped({1, 1, frame.extent(frame.rank() - 2), frame.extent(frame.rank() - 1)});
    ForwardResult fr = forward(net, batch);
    for (int c = 0; c < k; ++c) {
      const float conf = fr.confidences.at(0, c);
      r.confidence_track.at(t, c) = conf;
      if (c < k - 1 && conf > r.best_confidence[size_t(c)]) {
        r.best_confidence[size_t(c)] = conf;
        r.best_frame[size_t(c)] = t;
      }
    }
  }
  return r;
}

RetrievalScore score_retrieval(const RetrievalResult& r, const std::vector<ClassSpan>& spans) {
  RetrievalScore s;
  for (const auto& span : spans) {
    if (span.class_id < 0 || span.class_id >= int(r.best_frame.size())) continue;
    const int best = r.best_frame[size_t(span.class_id)];
    const bool ok = best >= span.first && best <= span.last;
    s.per_class.emplace_back(span.class_id, ok);
    ++s.pairs;
    if (ok) ++s.correct;
  }
  s.accuracy = s.pairs ? double(s.correct) / s.pairs : 0;
  return s;
}

std::string retrieval_csv(const RetrievalResult& r, const std::vector<ClassSpan>& spans) {
  std::ostringstream os;
  os << "class_id,best_frame,confidence,span_first,span_last,in_span\n";
  char buf[160];
  for (size_t c = 0; c < r.best_frame.size(); ++c) {
    int first = -1, last = -1, in_span = -1;
    for (const auto& s : spans)
      if (s.class_id == int(c)) {
        first = s.first;
        last = s.last;
        in_span = (r.best_frame[c] >= s.first && r.best_frame[c] <= s.last) ? 1 : 0;
      }
    std::snprintf(buf, sizeof(buf), "%zu,%d,%.6f,%d,%d,%d\n", c, r.best_frame[c],
                  double(r.best_confidence[c]), first, last, in_span);
    os << buf;
  }
  return os.str();
}

// ------------------------------------------------------------- localisation

LocalizationReport evaluate_localization(const Network& net, const Manifest& manifest,
                                         const std::string& root,
                                         const ClassSignTable& sign_table) {
  LocalizationReport rep;
  double iou_sum = 0;
  for (const auto& rec : manifest.records) {
    if (!rec.box || rec.class_id >= int(sign_table.size())) continue;
    Tensor img = read_pgm(root.empty() ? rec.path : root + "/" + rec.path);
    normalize_image(img);
    LocalizeResult lr = localize(net, img, rec.class_id, sign_table);
    LocalizationRow row;
    row.image = rec.path;
    row.class_id = rec.class_id;
    row.gt = rec.box;
    row.box = lr.box;
    row.iou_value = lr.box ? iou(*lr.box, *rec.box) : 0.0;
    row.correct = row.iou_value >= kIouCorrect;
    iou_sum += row.iou_value;
    ++rep.total;
    if (row.correct) ++rep.correct;
    rep.rows.push_back(std::move(row));
  }
  rep.accuracy = rep.total ? double(rep.correct) / rep.total : 0;
  rep.mean_iou = rep.total ? iou_sum / rep.total : 0;
  return rep;
}

std::string localization_csv(const LocalizationReport& r) {
  std::ostringstream os;
  os << "image_id,class_id,x0,y0,x1,y1,iou,correct\n";
  char buf[256];
  for (const auto& row : r.rows) {
    if (row.box)
      std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%d,%d,%.6f,%d\n", row.image.c_str(),
                    row.class_id, row.box->x0, row.box->y0, row.box->x1, row.box->y1,
                    row.iou_value, row.correct ? 1 : 0);
    else
      std::snprintf(buf, sizeof(buf), "%s,%d,,,,,0.000000,0\n", row.image.c_str(), row.class_id);
    os << buf;
  }
  return os.str();
}

// ------------------------------------------------------------- benchmark

namespace {

double time_loop(int n, const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

// Everything localisation adds after a forward pass with stored intermediates.
void localisation_stage(const Network& net, const Tape& tape, const Tensor& class_maps) {
  Tensor seed(class_maps.shape());
  const int hf = seed.extent(2), wf = seed.extent(3);
  for (int y = 0; y < hf; ++y)
    for (int x = 0; x < wf; ++x) {
      const float h = class_maps.at(0, 0, y, x);
      seed.at(0, 0, y, x) = h > 0.f ? h : 0.f;
    }
  Tensor dx = backward_to_input(net, tape, seed, BackwardMode::Guided);
  const int h = dx.extent(2), w = dx.extent(3);
  SaliencyMap sal{dx.reshaped({h, w}), SaliencyMethod::WeightedGuided, 0};
  ConfidenceMap cm = confidence_map(sal, SignMode::Both);
  float lo = cm.values[0], hi = cm.values[0];
  for (size_t i = 0; i < cm.values.numel(); ++i) {
    lo = std::min(lo, cm.values[i]);
    hi = std::max(hi, cm.values[i]);
  }
  if (lo == hi) return;
  const float t = isodata_threshold(cm.values);
  Mask mask = threshold_mask(cm.values, t);
  if (mask.empty()) return;
  min_bbox(largest_component(mask));
}

}  // namespace

BenchReport bench(const std::vector<std::string>& archs, int n_frames, int warmup,
                  uint64_t seed) {
  if (n_frames < 1) throw invalid_argument_error("bench: need at least one timed frame");
  BenchReport rep;
  rep.frames = n_frames;
  rep.warmup = warmup;

  Rng rng = Rng::stream(seed, 0xbe7c);
  Tensor frame({1, 1, kCanvasHeight, kCanvasWidth});
  for (size_t i = 0; i < frame.numel(); ++i) frame[i] = rng.normal();

  for (const auto& name : archs) {
    const Network net = Network::init(builtin_spec(name), seed);
    BenchRow row;
    row.arch = name;

    for (int i = 0; i < warmup; ++i) forward(net, frame);
    row.detection_fps = double(n_frames) / time_loop(n_frames, [&] { forward(net, frame); });

    Tape tape;
    ForwardResult fr = forward(net, frame, &tape);
    for (int i = 0; i < warmup; ++i) localisation_stage(net, tape, fr.class_maps);
    row.localisation_fps =
        double(n_frames) /
        time_loop(n_frames, [&] { localisation_stage(net, tape, fr.class_maps); });

    const auto combined = [&] {
      Tape t;
      ForwardResult f = forward(net, frame, &t);
      localisation_stage(net, t, f.class_maps);
    };
    for (int i = 0; i < warmup; ++i) combined();
    row.combined_fps = double(n_frames) / time_loop(n_frames, combined);

    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string bench_csv(const BenchReport& r) {
  std::ostringstream os;
  os << "arch,detection_fps,localisation_fps,combined_fps,batch,frames,warmup\n";
  char buf[160];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.3f,%.3f,%.3f,%d,%d,%d\n", row.arch.c_str(),
                  row.detection_fps, row.localisation_fps, row.combined_fps, r.batch, r.frames,
                  r.warmup);
    os << buf;
  }
  return os.str();
}

void print_bench(const BenchReport& r, std::ostream& os) {
  os << "arch        detection   localisation   combined (fps, batch " << r.batch << ", "
     << r.frames << " frames after " << r.warmup << " warmup)\n";
  char buf[160];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%-11s %-11.2f %-14.2f %.2f\n", row.arch.c_str(),
                  row.detection_fps, row.localisation_fps, row.combined_fps);
    os << buf;
  }
}

}  // namespace sononet
