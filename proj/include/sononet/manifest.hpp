#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sononet/geometry.hpp"

namespace sononet {

// One labelled image. Ground-truth boxes live in a separate evaluation file
// and are never part of the training manifest (weak supervision: training
// sees image-level labels only).
struct SampleRecord {
  std::string path;  // relative to the dataset root
  int class_id = 0;
  std::string case_id;
  std::optional<BoundingBox> box;  // evaluation only
};

struct Manifest {
  std::vector<SampleRecord> records;

  size_t size() const { return records.size(); }
  std::vector<std::string> case_ids() const;  // distinct, in first-seen order
  std::vector<size_t> indices_of_class(int class_id) const;
};

// Manifest lines: path<TAB>class_id<TAB>case_id
void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

// Evaluation boxes: path<TAB>x0,y0,x1,y1
void save_boxes(const Manifest& m, const std::string& path);
// Attaches boxes from the evaluation file onto matching records.
void load_boxes(Manifest& m, const std::string& path);

// Case-level split: shuffles the distinct case ids with the given seed and
// assigns the first `train_fraction` of cases to the first returned manifest.
std::pair<Manifest, Manifest> split_by_case(const Manifest& m, double train_fraction,
                                            uint64_t seed);

}  // namespace sononet
