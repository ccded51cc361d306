#include "sononet/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sononet/rng.hpp"

namespace sononet {

std::vector<std::string> Manifest::case_ids() const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.case_id).second) ids.push_back(r.case_id);
  return ids;
}

std::vector<size_t> Manifest::indices_of_class(int class_id) const {
  std::vector<size_t> idx;
  for (size_t i = 0; i < records.size(); ++i)
    if (records[i].class_id == class_id) idx.push_back(i);
  return idx;
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  for (const auto& r : m.records) f << r.path << "\t" << r.class_id << "\t" << r.case_id << "\n";
  if (!f) throw data_error("failed while writing: " + path);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    SampleRecord r;
    std::string cls;
    if (!std::getline(is, r.path, '\t') || !std::getline(is, cls, '\t') ||
        !std::getline(is, r.case_id, '\t'))
      throw data_error("malformed manifest line " + std::to_string(lineno) + " in " + path);
    r.class_id = std::stoi(cls);
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_boxes(const Manifest& m, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw data_error("cannot open for writing: " + path);
  for (const auto& r : m.records)
    if (r.box)
      f << r.path << "\t" << r.box->x0 << "," << r.box->y0 << "," << r.box->x1 << ","
        << r.box->y1 << "\n";
  if (!f) throw data_error("failed while writing: " + path);
}

void load_boxes(Manifest& m, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw data_error("cannot open boxes file: " + path);
  std::map<std::string, BoundingBox> by_path;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw data_error("malformed boxes line " + std::to_string(lineno) + " in " + path);
    BoundingBox b;
    if (std::sscanf(line.c_str() + tab + 1, "%d,%d,%d,%d", &b.x0, &b.y0, &b.x1, &b.y1) != 4)
      throw data_error("malformed box on line " + std::to_string(lineno) + " in " + path);
    by_path[line.substr(0, tab)] = b;
  }
  for (auto& r : m.records) {
    auto it = by_path.find(r.path);
    if (it != by_path.end()) r.box = it->second;
  }
}

std::pair<Manifest, Manifest> split_by_case(const Manifest& m, double train_fraction,
                                            uint64_t seed) {
  std::vector<std::string> ids = m.case_ids();
  Rng rng = Rng::stream(seed, 0x5b117);
  rng.shuffle(ids);
  const size_t n_train = size_t(std::llround(train_fraction * double(ids.size())));
  std::set<std::string> train_ids(ids.begin(), ids.begin() + std::ptrdiff_t(n_train));
  std::pair<Manifest, Manifest> out;
  for (const auto& r : m.records)
    (train_ids.count(r.case_id) ? out.first : out.second).records.push_back(r);
  return out;
}

}  // namespace sononet
