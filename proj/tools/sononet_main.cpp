// Command-line surface: dataset generation, training, evaluation, frame
// annotation, retrospective retrieval, localisation scoring and the fps
// benchmark. All reports are written as UTF-8 CSV with a human-readable
// summary on stdout.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sononet/eval.hpp"
#include "sononet/localizer.hpp"
#include "sononet/netdef.hpp"
#include "sononet/pgm.hpp"
#include "sononet/synthdata.hpp"
#include "sononet/trainer.hpp"

using namespace sononet;

namespace {

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw data_error("failed while writing: " + path);
}

int run(int argc, char** argv) {
  CLI::App app{"fully-convolutional standard-plane detection, saliency and localisation"};
  app.require_subcommand(1);

  // ---- gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out = "data";
  DatasetConfig dcfg;
  int gen_videos = 0, gen_video_frames = 2000;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--cases", dcfg.n_cases, "number of cases");
  gen->add_option("--per-class", dcfg.per_class_count, "foreground images per class");
  gen->add_option("--bg-ratio", dcfg.background_ratio, "test background per foreground");
  gen->add_option("--train-bg-ratio", dcfg.train_background_per_fg,
                  "train background per foreground");
  gen->add_option("--noise", dcfg.noise_level, "noise level");
  gen->add_option("--seed", dcfg.seed, "rng seed");
  gen->add_option("--videos", gen_videos, "synthetic sweep videos to write");
  gen->add_option("--video-frames", gen_video_frames, "frames per video");

  // ---- train
  auto* tr = app.add_subcommand("train", "train a network on a manifest");
  std::string tr_spec = "sononet8", tr_manifest, tr_root, tr_config, tr_out = "weights.snnw",
              tr_log = "train_log.csv";
  uint64_t tr_seed = 0;
  bool tr_seed_set = false;
  tr->add_option("--spec", tr_spec, "architecture name");
  tr->add_option("--manifest", tr_manifest, "training manifest")->required();
  tr->add_option("--root", tr_root, "dataset root directory");
  tr->add_option("--config", tr_config, "key=value training config file");
  tr->add_option("--out", tr_out, "output weight file");
  tr->add_option("--log", tr_log, "training log CSV");
  tr->add_option("--seed", tr_seed, "rng seed (overrides config)")
      ->each([&](const std::string&) { tr_seed_set = true; });

  // ---- evaluate
  auto* ev = app.add_subcommand("evaluate", "detection metrics over a manifest");
  std::string ev_spec = "sononet8", ev_weights, ev_manifest, ev_root, ev_out = "metrics.csv",
              ev_confusion;
  ev->add_option("--spec", ev_spec, "architecture name");
  ev->add_option("--weights", ev_weights, "weight file")->required();
  ev->add_option("--manifest", ev_manifest, "labelled manifest")->required();
  ev->add_option("--root", ev_root, "dataset root directory");
  ev->add_option("--out", ev_out, "metrics CSV");
  ev->add_option("--confusion-out", ev_confusion, "confusion matrix CSV");

  // ---- annotate
  auto* an = app.add_subcommand("annotate", "classify one frame, optionally localise");
  std::string an_spec = "sononet8", an_weights, an_image, an_out;
  bool an_box = false;
  an->add_option("--spec", an_spec, "architecture name");
  an->add_option("--weights", an_weights, "weight file")->required();
  an->add_option("--image", an_image, "input PGM frame")->required();
  an->add_flag("--localize", an_box, "also compute a bounding box");
  an->add_option("--out", an_out, "annotation CSV");

  // ---- retrieve
  auto* re = app.add_subcommand("retrieve", "per-class best frame over a video directory");
  std::string re_spec = "sononet8", re_weights, re_video, re_out = "retrieval.csv";
  re->add_option("--spec", re_spec, "architecture name");
  re->add_option("--weights", re_weights, "weight file")->required();
  re->add_option("--video", re_video, "directory of frameNNNNNN.pgm files")->required();
  re->add_option("--out", re_out, "retrieval CSV");

  // ---- localize
  auto* lo = app.add_subcommand("localize", "score localisation against ground-truth boxes");
  std::string lo_spec = "sononet8", lo_weights, lo_manifest, lo_boxes, lo_root,
              lo_out = "localization.csv";
  lo->add_option("--spec", lo_spec, "architecture name");
  lo->add_option("--weights", lo_weights, "weight file")->required();
  lo->add_option("--manifest", lo_manifest, "labelled manifest")->required();
  lo->add_option("--boxes", lo_boxes, "ground-truth boxes file")->required();
  lo->add_option("--root", lo_root, "dataset root directory");
  lo->add_option("--out", lo_out, "localisation CSV");

  // ---- bench
  auto* be = app.add_subcommand("bench", "frames-per-second benchmark");
  std::vector<std::string> be_archs = {"smallnet", "sononet16", "sononet32", "sononet64"};
  int be_frames = 10, be_warmup = 2;
  uint64_t be_seed = 1;
  std::string be_out = "bench.csv";
  be->add_option("--archs", be_archs, "architectures to time");
  be->add_option("--frames", be_frames, "timed frames per phase");
  be->add_option("--warmup", be_warmup, "warmup frames discarded");
  be->add_option("--seed", be_seed, "rng seed");
  be->add_option("--out", be_out, "benchmark CSV");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    Dataset ds = gen_dataset(dcfg, gen_out);
    std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size()
              << " test records under " << gen_out << "\n";
    if (gen_videos > 0) {
      // videos use the test cases' class sets so retrieval runs on held-out scenes
      std::vector<int> classes(kForegroundClasses);
      for (int c = 0; c < kForegroundClasses; ++c) classes[size_t(c)] = c;
      for (int v = 0; v < gen_videos; ++v) {
        VideoSpec vs{classes, gen_video_frames, dcfg.seed * 1000003ull + uint64_t(v),
                     dcfg.noise_level};
        Video video = gen_video(vs);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "videos/vid%03d", v);
        write_video(video, (std::filesystem::path(gen_out) / buf).string());
      }
      std::cout << "wrote " << gen_videos << " videos x " << gen_video_frames << " frames\n";
    }
    return 0;
  }

  if (tr->parsed()) {
    TrainConfig cfg;
    if (!tr_config.empty()) cfg = TrainConfig::load(tr_config);
    if (tr_seed_set) cfg.seed = tr_seed;
    Manifest manifest = load_manifest(tr_manifest);
    NetworkSpec spec = builtin_spec(tr_spec);
    TrainResult result = train(spec, manifest, tr_root, cfg);
    save_weights(result.net, tr_out);
    save_train_log(result.log, tr_log);
    std::cout << "trained " << tr_spec << " for " << result.iterations
              << " iterations, best validation loss " << result.best_val_loss << "\n"
              << "weights: " << tr_out << "\nlog: " << tr_log << "\n";
    return 0;
  }

  if (ev->parsed()) {
    Network net = load_weights(builtin_spec(ev_spec), ev_weights);
    Manifest manifest = load_manifest(ev_manifest);
    MetricsReport rep = evaluate(net, manifest, ev_root);
    write_text(ev_out, metrics_csv(rep));
    if (!ev_confusion.empty()) write_text(ev_confusion, confusion_csv(rep));
    print_metrics(rep, std::cout);
    return 0;
  }

  if (an->parsed()) {
    Network net = load_weights(builtin_spec(an_spec), an_weights);
    Tensor frame = read_pgm(an_image);
    Annotation a = annotate(net, frame, an_box, default_sign_table());
    std::ostringstream os;
    os << "image,class_id,confidence,x0,y0,x1,y1\n" << an_image << "," << a.class_id << ","
       << a.confidence << ",";
    if (a.box)
      os << a.box->x0 << "," << a.box->y0 << "," << a.box->x1 << "," << a.box->y1;
    else
      os << ",,,";
    os << "\n";
    if (!an_out.empty()) write_text(an_out, os.str());
    std::cout << "class " << a.class_id << " confidence " << a.confidence;
    if (a.box) std::cout << " box " << a.box->str();
    std::cout << "\n";
    return 0;
  }

  if (re->parsed()) {
    Network net = load_weights(builtin_spec(re_spec), re_weights);
    namespace fs = std::filesystem;
    std::vector<std::string> frames;
    for (const auto& e : fs::directory_iterator(re_video)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("frame", 0) == 0 && e.path().extension() == ".pgm")
        frames.push_back(e.path().string());
    }
    if (frames.empty()) throw data_error("no frameNNNNNN.pgm files in " + re_video);
    std::sort(frames.begin(), frames.end());
    RetrievalResult rr = retrieve(net, int(frames.size()),
                                  [&](int i) { return read_pgm(frames[size_t(i)]); });
    std::vector<ClassSpan> spans;
    const std::string track = (fs::path(re_video) / "track.tsv").string();
    if (fs::exists(track)) spans = load_video_track(track);
    write_text(re_out, retrieval_csv(rr, spans));
    if (!spans.empty()) {
      RetrievalScore sc = score_retrieval(rr, spans);
      std::cout << "retrieval accuracy " << sc.accuracy << " (" << sc.correct << "/" << sc.pairs
                << ")\n";
    } else {
      for (size_t c = 0; c < rr.best_frame.size(); ++c)
        std::cout << "class " << c << ": frame " << rr.best_frame[c] << " confidence "
                  << rr.best_confidence[c] << "\n";
    }
    return 0;
  }

  if (lo->parsed()) {
    Network net = load_weights(builtin_spec(lo_spec), lo_weights);
    Manifest manifest = load_manifest(lo_manifest);
    load_boxes(manifest, lo_boxes);
    LocalizationReport rep = evaluate_localization(net, manifest, lo_root, default_sign_table());
    write_text(lo_out, localization_csv(rep));
    std::cout << "localisation accuracy " << rep.accuracy << " (" << rep.correct << "/"
              << rep.total << "), mean IOU " << rep.mean_iou << "\n";
    return 0;
  }

  if (be->parsed()) {
    BenchReport rep = bench(be_archs, be_frames, be_warmup, be_seed);
    write_text(be_out, bench_csv(rep));
    print_bench(rep, std::cout);
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
