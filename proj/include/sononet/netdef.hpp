#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sononet/ops.hpp"
#include "sononet/rng.hpp"
#include "sononet/tensor.hpp"

namespace sononet {

enum class Activation { ReLU, Linear };

struct ConvSpec {
  int kh = 3, kw = 3;
  int cout = 0;
  int stride = 1;
  Padding pad = Padding::Same;
  bool bn = true;
  Activation act = Activation::ReLU;
};

struct LayerSpec {
  enum class Kind { Conv, MaxPool };
  Kind kind = Kind::Conv;
  ConvSpec conv;

  static LayerSpec conv_bn_relu(int k, int cout, int stride = 1) {
    return {Kind::Conv, {k, k, cout, stride, Padding::Same, true, Activation::ReLU}};
  }
  static LayerSpec conv_relu(int k, int cout, int stride = 1) {
    return {Kind::Conv, {k, k, cout, stride, Padding::Same, false, Activation::ReLU}};
  }
  static LayerSpec conv_linear(int k, int cout) {
    return {Kind::Conv, {k, k, cout, 1, Padding::Same, false, Activation::Linear}};
  }
  static LayerSpec maxpool() { return {Kind::MaxPool, {}}; }
};

// Declarative architecture: an ordered layer list ending in the classification
// conv that produces the class score maps (cout = num_classes, linear, no BN).
struct NetworkSpec {
  std::string name;
  int in_channels = 1;
  int num_classes = 14;
  std::vector<LayerSpec> layers;

  // Product of all pooling and conv strides.
  int downsample_factor() const;
  // True when every conv uses Same padding (spatial size then depends only on
  // the downsampling factor).
  bool all_same_pad() const;
  int channels_before(int layer) const;  // input channel count of a layer
  void validate() const;
};

// sononet64 / sononet32 / sononet16 / sononet8 / sononet4 / smallnet.
// The numeric suffix is the first conv's kernel count; every other conv scales
// with it. sononet8 and sononet4 continue the halving series for machines
// where the larger variants are impractical.
NetworkSpec builtin_spec(const std::string& name, int num_classes = 14, int in_channels = 1);
const std::vector<std::string>& builtin_spec_names();

struct LayerParams {
  Tensor kernel;  // [Cout,Cin,kh,kw]
  std::vector<float> bias;
  BatchNormParams bn;  // empty when the layer has no BN
};

struct Network {
  NetworkSpec spec;
  std::vector<LayerParams> params;  // one per layer; empty entry for MaxPool

  // He-normal kernels (variance 2/fan_in), zero biases, identity BN.
  static Network init(const NetworkSpec& spec, uint64_t seed);

  size_t param_count() const;         // trainable scalars
  size_t kernel_param_count() const;  // conv kernel scalars only
};

struct ForwardResult {
  Tensor class_maps;   // F: [B,K,Hf,Wf]
  Tensor scores;       // a = spatial_mean(F): [B,K]
  Tensor confidences;  // c = softmax(a): [B,K]
  std::vector<int> predictions;
};

// Stored intermediates of one forward pass; owned by the caller so concurrent
// passes over the same immutable network stay independent.
struct LayerTape {
  Tensor output;
  BatchNormCache bn;
  std::vector<int32_t> pool_argmax;
};

struct Tape {
  Tensor input;
  std::vector<LayerTape> layers;
  PhaseMode mode = PhaseMode::Infer;
};

// Train-mode forward updates BN running statistics, so the network is mutable.
ForwardResult forward(Network& net, const Tensor& batch, PhaseMode mode, Tape* tape = nullptr);
// Infer-mode forward over an immutable network.
ForwardResult forward(const Network& net, const Tensor& batch, Tape* tape = nullptr);

struct LayerGrads {
  Tensor kernel;
  std::vector<float> bias, gamma, beta;
};

// Gradients of all trainable parameters given the loss gradient at the scores
// a (shape [B,K]); uses the tape of the corresponding train-mode forward.
std::vector<LayerGrads> backward_params(const Network& net, const Tape& tape,
                                        const Tensor& score_grad);

// Error propagation from a seed at the class score maps F down to the input
// image; ReLU units apply the requested backward rule.
Tensor backward_to_input(const Network& net, const Tape& tape, const Tensor& class_map_seed,
                         BackwardMode relu_mode);

// Same but seeded at the scores a (the seed passes through the mean
// aggregation first).
Tensor backward_scores_to_input(const Network& net, const Tape& tape, const Tensor& score_seed,
                                BackwardMode relu_mode);

// ---------------------------------------------------------------------------
// Weight file I/O. Little-endian container: magic "SNNW", version u32 = 1,
// tensor count u32; per tensor: name (u16 length + UTF-8), rank u8, extents
// u32 x rank, dtype u8 (0 = float32), raw data. Round-trip is bit-exact.

void save_weights(const Network& net, const std::string& path);
Network load_weights(const NetworkSpec& spec, const std::string& path);

// ---------------------------------------------------------------------------
// Compares each class-map cell against evaluating the network on the matching
// receptive-field crop; exact only for all-Valid-padding networks. Returns the
// max absolute deviation.
float sliding_window_equiv_check(const Network& net, const Tensor& image);

}  // namespace sononet
