#include "sononet/netdef.hpp"

#include <cmath>

namespace sononet {

int NetworkSpec::downsample_factor() const {
  int f = 1;
  for (const auto& l : layers)
    f *= (l.kind == LayerSpec::Kind::MaxPool) ? 2 : l.conv.stride;
  return f;
}

bool NetworkSpec::all_same_pad() const {
  for (const auto& l : layers)
    if (l.kind == LayerSpec::Kind::Conv && l.conv.pad != Padding::Same) return false;
  return true;
}

int NetworkSpec::channels_before(int layer) const {
  int c = in_channels;
  for (int i = 0; i < layer; ++i)
    if (layers[size_t(i)].kind == LayerSpec::Kind::Conv) c = layers[size_t(i)].conv.cout;
  return c;
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw invalid_argument_error("network spec '" + name + "' has no layers");
  const auto& last = layers.back();
  if (last.kind != LayerSpec::Kind::Conv || last.conv.cout != num_classes ||
      last.conv.act != Activation::Linear || last.conv.bn)
    throw invalid_argument_error("network spec '" + name +
                                 "' must end in a linear BN-free conv with cout = " +
                                 std::to_string(num_classes));
  for (const auto& l : layers)
    if (l.kind == LayerSpec::Kind::Conv && (l.conv.cout < 1 || l.conv.stride < 1))
      throw invalid_argument_error("network spec '" + name + "' has an invalid conv layer");
}

static NetworkSpec make_sononet(const std::string& name, int divisor, int num_classes,
                                int in_channels) {
  auto ch = [divisor](int base) { return base / divisor; };
  NetworkSpec s;
  s.name = name;
  s.in_channels = in_channels;
  s.num_classes = num_classes;
  auto c = [&](int k, int cout) { s.layers.push_back(LayerSpec::conv_bn_relu(k, cout)); };
  auto mp = [&] { s.layers.push_back(LayerSpec::maxpool()); };
  c(3, ch(64));
  c(3, ch(64));
  mp();
  c(3, ch(128));
  c(3, ch(128));
  mp();
  c(3, ch(256));
  c(3, ch(256));
  c(3, ch(256));
  mp();
  c(3, ch(512));
  c(3, ch(512));
  c(3, ch(512));
  mp();
  c(3, ch(512));
  c(3, ch(512));
  c(3, ch(512));
  // adaptation: 1x1 with BN+ReLU at half the last feature width, then the
  // linear classification conv producing the class score maps
  c(1, ch(256));
  s.layers.push_back(LayerSpec::conv_linear(1, num_classes));
  s.validate();
  return s;
}

static NetworkSpec make_smallnet(int num_classes, int in_channels) {
  NetworkSpec s;
  s.name = "smallnet";
  s.in_channels = in_channels;
  s.num_classes = num_classes;
  s.layers = {
      LayerSpec::conv_relu(7, 32, 2), LayerSpec::maxpool(),    LayerSpec::conv_relu(5, 64),
      LayerSpec::maxpool(),           LayerSpec::conv_relu(3, 128),
      LayerSpec::conv_relu(3, 128),   LayerSpec::maxpool(),    LayerSpec::conv_relu(1, 64),
      LayerSpec::conv_linear(1, num_classes),
  };
  s.validate();
  return s;
}

const std::vector<std::string>& builtin_spec_names() {
  static const std::vector<std::string> names = {"sononet64", "sononet32", "sononet16",
                                                 "sononet8",  "sononet4",  "smallnet"};
  return names;
}

NetworkSpec builtin_spec(const std::string& name, int num_classes, int in_channels) {
  if (name == "sononet64") return make_sononet(name, 1, num_classes, in_channels);
  if (name == "sononet32") return make_sononet(name, 2, num_classes, in_channels);
  if (name == "sononet16") return make_sononet(name, 4, num_classes, in_channels);
  if (name == "sononet8") return make_sononet(name, 8, num_classes, in_channels);
  if (name == "sononet4") return make_sononet(name, 16, num_classes, in_channels);
  if (name == "smallnet") return make_smallnet(num_classes, in_channels);
  throw invalid_argument_error("unknown network spec '" + name +
                               "' (expected sononet64|sononet32|sononet16|sononet8|sononet4|"
                               "smallnet)");
}

Network Network::init(const NetworkSpec& spec, uint64_t seed) {
  spec.validate();
  Network net;
  net.spec = spec;
  Rng rng = Rng::stream(seed, 0x1d17);
  int cin = spec.in_channels;
  for (const auto& l : spec.layers) {
    LayerParams p;
    if (l.kind == LayerSpec::Kind::Conv) {
      p.kernel = Tensor({l.conv.cout, cin, l.conv.kh, l.conv.kw});
      const float std_dev = std::sqrt(2.f / float(cin * l.conv.kh * l.conv.kw));
      for (size_t i = 0; i < p.kernel.numel(); ++i) p.kernel[i] = std_dev * rng.normal();
      p.bias.assign(size_t(l.conv.cout), 0.f);
      if (l.conv.bn) p.bn = BatchNormParams::identity(l.conv.cout);
      cin = l.conv.cout;
    }
    net.params.push_back(std::move(p));
  }
  return net;
}

size_t Network::param_count() const {
  size_t n = 0;
  for (const auto& p : params) {
    n += p.kernel.numel() + p.bias.size();
    if (!p.bn.empty()) n += p.bn.gamma.size() + p.bn.beta.size();
  }
  return n;
}

size_t Network::kernel_param_count() const {
  size_t n = 0;
  for (const auto& p : params) n += p.kernel.numel();
  return n;
}

// -------------------------------------------------------------- forward

static ForwardResult forward_impl(const NetworkSpec& spec, std::vector<LayerParams>& params,
                                  const Tensor& batch, PhaseMode mode, Tape* tape) {
  if (batch.rank() != 4)
    throw invalid_argument_error("forward: need a [B,C,H,W] batch, got " + batch.shape_str());
  if (batch.extent(1) != spec.in_channels)
    throw invalid_argument_error("forward: network '" + spec.name + "' expects " +
                                 std::to_string(spec.in_channels) + " input channels, got " +
                                 batch.shape_str());
  if (spec.all_same_pad()) {
    const int f = spec.downsample_factor();
    if (batch.extent(2) % f || batch.extent(3) % f)
      throw invalid_argument_error("forward: input " + batch.shape_str() +
                                   " extents must be divisible by " + std::to_string(f));
  }

  if (tape) {
    tape->input = batch;
    tape->layers.assign(spec.layers.size(), {});
    tape->mode = mode;
  }

  Tensor x = batch;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind == LayerSpec::Kind::MaxPool) {
      MaxPoolOut mp = maxpool2(x);
      if (tape) tape->layers[i].pool_argmax = std::move(mp.argmax);
      x = std::move(mp.output);
    } else {
      x = conv2d(x, params[i].kernel, params[i].bias, l.conv.stride, l.conv.pad);
      if (l.conv.bn)
        x = batchnorm(x, params[i].bn, mode, tape ? &tape->layers[i].bn : nullptr);
      if (l.conv.act == Activation::ReLU) x = relu(x);
    }
    if (tape) tape->layers[i].output = x;
  }

  ForwardResult r;
  r.class_maps = std::move(x);
  r.scores = spatial_mean(r.class_maps);
  r.confidences = softmax_rows(r.scores);
  const int b = r.scores.extent(0), k = r.scores.extent(1);
  r.predictions.resize(size_t(b));
  for (int n = 0; n < b; ++n) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (r.confidences.at(n, j) > r.confidences.at(n, best)) best = j;
    r.predictions[size_t(n)] = best;
  }
  return r;
}

ForwardResult forward(Network& net, const Tensor& batch, PhaseMode mode, Tape* tape) {
  return forward_impl(net.spec, net.params, batch, mode, tape);
}

ForwardResult forward(const Network& net, const Tensor& batch, Tape* tape) {
  // Infer mode leaves the parameters (incl. running stats) untouched.
  auto& params = const_cast<std::vector<LayerParams>&>(net.params);
  return forward_impl(net.spec, params, batch, PhaseMode::Infer, tape);
}

// -------------------------------------------------------------- backward

static const Tensor& layer_input(const Tape& tape, size_t layer) {
  return layer == 0 ? tape.input : tape.layers[layer - 1].output;
}

// Shared walk from the class-map layer down to the input. When grads is
// non-null, parameter gradients are accumulated as well.
static Tensor backward_walk(const Network& net, const Tape& tape, Tensor delta,
                            BackwardMode relu_mode, std::vector<LayerGrads>* grads) {
  const auto& spec = net.spec;
  for (int i = int(spec.layers.size()) - 1; i >= 0; --i) {
    const auto& l = spec.layers[size_t(i)];
    const auto& lt = tape.layers[size_t(i)];
    const Tensor& in = layer_input(tape, size_t(i));
    if (l.kind == LayerSpec::Kind::MaxPool) {
      delta = maxpool2_backward(lt.pool_argmax, in.shape(), delta);
      continue;
    }
    // layer = conv -> bn -> relu; walk it backwards
    if (l.conv.act == Activation::ReLU) {
      // the stored output is relu(x), which has the same positivity mask as x
      delta = relu_backward(lt.output, delta, relu_mode);
    }
    if (l.conv.bn) {
      if (lt.bn.mode == PhaseMode::Train) {
        BatchNormGrads bg = batchnorm_backward(lt.bn, net.params[size_t(i)].bn.gamma, delta);
        if (grads) {
          (*grads)[size_t(i)].gamma = std::move(bg.gamma);
          (*grads)[size_t(i)].beta = std::move(bg.beta);
        }
        delta = std::move(bg.input);
      } else {
        delta = batchnorm_backward_infer(lt.bn, delta);
      }
    }
    if (grads) {
      Conv2dGrads cg = conv2d_backward(in, net.params[size_t(i)].kernel, l.conv.stride,
                                       l.conv.pad, delta);
      (*grads)[size_t(i)].kernel = std::move(cg.kernel);
      (*grads)[size_t(i)].bias = std::move(cg.bias);
      delta = std::move(cg.input);
    } else {
      delta = conv2d_backward_input(net.params[size_t(i)].kernel, l.conv.stride, l.conv.pad,
                                    delta, in.shape());
    }
  }
  return delta;
}

std::vector<LayerGrads> backward_params(const Network& net, const Tape& tape,
                                        const Tensor& score_grad) {
  const auto& fshape = tape.layers.back().output.shape();
  Tensor delta = spatial_mean_backward(score_grad, fshape[2], fshape[3]);
  std::vector<LayerGrads> grads(net.spec.layers.size());
  backward_walk(net, tape, std::move(delta), BackwardMode::PlainGradient, &grads);
  return grads;
}

Tensor backward_to_input(const Network& net, const Tape& tape, const Tensor& class_map_seed,
                         BackwardMode relu_mode) {
  check_same_shape(tape.layers.back().output, class_map_seed, "backward_to_input seed");
  return backward_walk(net, tape, class_map_seed, relu_mode, nullptr);
}

Tensor backward_scores_to_input(const Network& net, const Tape& tape, const Tensor& score_seed,
                                BackwardMode relu_mode) {
  const auto& fshape = tape.layers.back().output.shape();
  Tensor delta = spatial_mean_backward(score_seed, fshape[2], fshape[3]);
  return backward_walk(net, tape, std::move(delta), relu_mode, nullptr);
}

// ------------------------------------------- sliding-window equivalence

float sliding_window_equiv_check(const Network& net, const Tensor& image) {
  for (const auto& l : net.spec.layers)
    if (l.kind == LayerSpec::Kind::Conv && l.conv.pad != Padding::Valid)
      throw invalid_argument_error(
          "sliding_window_equiv_check: exact only for all-Valid-padding networks");

  // Receptive field size and stride from inverse shape arithmetic: start from
  // a 1x1 class map and walk the layers backwards.
  int field = 1, stride = 1;
  for (int i = int(net.spec.layers.size()) - 1; i >= 0; --i) {
    const auto& l = net.spec.layers[size_t(i)];
    if (l.kind == LayerSpec::Kind::MaxPool) {
      field *= 2;
      stride *= 2;
    } else {
      field = (field - 1) * l.conv.stride + l.conv.kh;
      stride *= l.conv.stride;
    }
  }

  ForwardResult full = forward(net, image);
  const int k = full.class_maps.extent(1);
  const int hf = full.class_maps.extent(2), wf = full.class_maps.extent(3);
  const int c = image.extent(1);

  float max_dev = 0.f;
  for (int y = 0; y < hf; ++y)
    for (int x = 0; x < wf; ++x) {
      Tensor crop({1, c, field, field});
      for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < field; ++yy)
          for (int xx = 0; xx < field; ++xx)
            crop.at(0, ch, yy, xx) = image.at(0, ch, y * stride + yy, x * stride + xx);
      ForwardResult patch = forward(net, crop);
      for (int j = 0; j < k; ++j) {
        const float dev = std::fabs(patch.class_maps.at(0, j, 0, 0) -
                                    full.class_maps.at(0, j, y, x));
        max_dev = std::max(max_dev, dev);
      }
    }
  return max_dev;
}

}  // namespace sononet
