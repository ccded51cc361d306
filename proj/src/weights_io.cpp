#include <cstdint>
#include <cstring>
#include <fstream>

#include "sononet/netdef.hpp"

namespace sononet {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'N', 'W'};
constexpr uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  const float* data;
  size_t count;
};

void collect(const Network& net, std::vector<NamedTensor>& out) {
  for (size_t i = 0; i < net.params.size(); ++i) {
    const auto& p = net.params[i];
    if (p.kernel.empty()) continue;  // maxpool
    const std::string prefix = "layer" + std::to_string(i) + ".";
    out.push_back({prefix + "kernel", p.kernel.shape(), p.kernel.data(), p.kernel.numel()});
    out.push_back({prefix + "bias", {int(p.bias.size())}, p.bias.data(), p.bias.size()});
    if (!p.bn.empty()) {
      const int c = int(p.bn.gamma.size());
      out.push_back({prefix + "gamma", {c}, p.bn.gamma.data(), p.bn.gamma.size()});
      out.push_back({prefix + "beta", {c}, p.bn.beta.data(), p.bn.beta.size()});
      out.push_back(
          {prefix + "running_mean", {c}, p.bn.running_mean.data(), p.bn.running_mean.size()});
      out.push_back(
          {prefix + "running_var", {c}, p.bn.running_var.data(), p.bn.running_var.size()});
    }
  }
}

template <class T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw data_error("weight file truncated: " + path);
  return v;
}

}  // namespace

void save_weights(const Network& net, const std::string& path) {
  if (net.params.empty()) throw invalid_argument_error("save_weights: network not instantiated");
  std::vector<NamedTensor> tensors;
  collect(net, tensors);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw data_error("cannot open weight file for writing: " + path);
  f.write(kMagic, 4);
  write_pod(f, kVersion);
  write_pod(f, uint32_t(tensors.size()));
  for (const auto& t : tensors) {
    write_pod(f, uint16_t(t.name.size()));
    f.write(t.name.data(), std::streamsize(t.name.size()));
    write_pod(f, uint8_t(t.shape.size()));
    for (int e : t.shape) write_pod(f, uint32_t(e));
    write_pod(f, uint8_t(0));  // dtype: float32
    f.write(reinterpret_cast<const char*>(t.data), std::streamsize(t.count * sizeof(float)));
  }
  if (!f) throw data_error("failed while writing weight file: " + path);
}

Network load_weights(const NetworkSpec& spec, const std::string& path) {
  Network net = Network::init(spec, 0);
  std::vector<NamedTensor> expected;
  collect(net, expected);

  std::ifstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot open weight file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("weight file format error (bad magic): " + path);
  const auto version = read_pod<uint32_t>(f, path);
  if (version != kVersion)
    throw data_error("weight file version " + std::to_string(version) + " unsupported: " + path);
  const auto count = read_pod<uint32_t>(f, path);
  if (count != expected.size())
    throw data_error("weight file holds " + std::to_string(count) + " tensors, spec '" +
                     spec.name + "' needs " + std::to_string(expected.size()));

  for (auto& t : expected) {
    const auto name_len = read_pod<uint16_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw data_error("weight file truncated: " + path);
    if (name != t.name)
      throw data_error("weight file tensor '" + name + "' where '" + t.name + "' expected");
    const auto rank = read_pod<uint8_t>(f, path);
    std::vector<int> shape(rank);
    for (auto& e : shape) e = int(read_pod<uint32_t>(f, path));
    if (shape != t.shape)
      throw data_error("weight file shape mismatch for '" + t.name + "': file has " +
                       shape_str(shape) + ", spec '" + spec.name + "' needs " +
                       shape_str(t.shape));
    const auto dtype = read_pod<uint8_t>(f, path);
    if (dtype != 0)
      throw data_error("weight file dtype code " + std::to_string(dtype) + " unsupported");
    f.read(reinterpret_cast<char*>(const_cast<float*>(t.data)),
           std::streamsize(t.count * sizeof(float)));
    if (!f) throw data_error("weight file truncated: " + path);
  }
  return net;
}

}  // namespace sononet
