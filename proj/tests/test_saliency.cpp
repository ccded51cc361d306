#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sononet/gradcheck.hpp"
#include "sononet/saliency.hpp"
#include "test_util.hpp"

using namespace sononet;
using testutil::random_tensor;
using testutil::TmpDir;

namespace {

NetworkSpec relu_free_spec(int num_classes = 2) {
  NetworkSpec s;
  s.name = "relu-free";
  s.num_classes = num_classes;
  s.layers = {
      LayerSpec{LayerSpec::Kind::Conv, {3, 3, 4, 1, Padding::Same, false, Activation::Linear}},
      LayerSpec::maxpool(),
      LayerSpec::conv_linear(1, num_classes)};
  s.validate();
  return s;
}

NetworkSpec relu_nobn_spec(int num_classes = 2) {
  NetworkSpec s;
  s.name = "relu-nobn";
  s.num_classes = num_classes;
  s.layers = {LayerSpec::conv_relu(3, 4), LayerSpec::maxpool(), LayerSpec::conv_relu(3, 4),
              LayerSpec::conv_linear(1, num_classes)};
  s.validate();
  return s;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.f;
  for (size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("plain saliency of a single 1x1 conv + mean net is constant w/(H*W)") {
  NetworkSpec s;
  s.name = "one-conv";
  s.num_classes = 1;
  s.layers = {LayerSpec::conv_linear(1, 1)};
  s.validate();
  Network net = Network::init(s, 1);
  net.params[0].kernel[0] = 0.7f;
  net.params[0].bias[0] = 0.3f;
  Rng rng(2);
  Tensor img = random_tensor({1, 6, 8}, rng);
  SaliencyMap sal = plain_saliency(net, img, 0);
  CHECK(sal.values.shape() == std::vector<int>{6, 8});
  for (size_t i = 0; i < sal.values.numel(); ++i)
    CHECK(sal.values[i] == doctest::Approx(0.7f / 48.f).epsilon(1e-5));
}

TEST_CASE("plain saliency matches finite differences") {
  Network net = Network::init(testutil::tiny_bn_spec(3), 7);
  Rng rng(5);
  Tensor img = random_tensor({1, 1, 8, 8}, rng);
  const int k = 1;
  DiffOp op{[&](const Tensor& p) {
              ForwardResult fr = forward(net, p);
              return Tensor({1}, {fr.scores.at(0, k)});
            },
            [&](const Tensor& p, const Tensor& w) {
              SaliencyMap s = plain_saliency(net, p, k);
              Tensor g = s.values.reshaped({1, 1, 8, 8});
              for (size_t i = 0; i < g.numel(); ++i) g[i] *= w[0];
              return g;
            }};
  // step chosen small enough that no downstream ReLU unit changes state
  // inside the probe window (verified by the identical error at half the step)
  CHECK(finite_diff_check(op, img, 0.002f, 100, rng) < 1e-2f);
}

TEST_CASE("zero image through a zero-bias ReLU net has zero saliency") {
  Network net = Network::init(relu_nobn_spec(2), 3);
  Tensor img({1, 8, 8});
  SaliencyMap s = plain_saliency(net, img, 0);
  for (size_t i = 0; i < s.values.numel(); ++i) CHECK(s.values[i] == 0.f);
  SaliencyMap g = guided_saliency(net, img, 0);
  for (size_t i = 0; i < g.values.numel(); ++i) CHECK(g.values[i] == 0.f);
}

TEST_CASE("plain saliency of a linear network is input independent") {
  // fully linear: no ReLU, no pooling (a pooling argmax depends on the input)
  NetworkSpec s;
  s.name = "linear";
  s.num_classes = 2;
  s.layers = {
      LayerSpec{LayerSpec::Kind::Conv, {3, 3, 4, 1, Padding::Same, false, Activation::Linear}},
      LayerSpec::conv_linear(1, 2)};
  s.validate();
  Network net = Network::init(s, 11);
  Rng rng(6);
  Tensor a = random_tensor({1, 8, 8}, rng);
  Tensor b = random_tensor({1, 8, 8}, rng);
  SaliencyMap sa = plain_saliency(net, a, 1);
  SaliencyMap sb = plain_saliency(net, b, 1);
  for (size_t i = 0; i < sa.values.numel(); ++i) CHECK(sa.values[i] == sb.values[i]);
}

TEST_CASE("guided equals plain bit-for-bit on a ReLU-free network") {
  Network net = Network::init(relu_free_spec(3), 13);
  Rng rng(7);
  Tensor img = random_tensor({1, 8, 8}, rng);
  SaliencyMap p = plain_saliency(net, img, 2);
  SaliencyMap g = guided_saliency(net, img, 2);
  for (size_t i = 0; i < p.values.numel(); ++i) CHECK(p.values[i] == g.values[i]);
}

TEST_CASE("guided equals plain when every signal stays positive") {
  // all-positive kernels, biases and input keep every ReLU input and every
  // back-propagated error positive
  NetworkSpec spec = relu_nobn_spec(2);
  Network net = Network::init(spec, 17);
  Rng rng(8);
  for (auto& p : net.params) {
    for (size_t i = 0; i < p.kernel.numel(); ++i) p.kernel[i] = rng.uniform(0.05f, 0.4f);
    for (auto& b : p.bias) b = rng.uniform(0.01f, 0.1f);
  }
  Tensor img = random_tensor({1, 8, 8}, rng, 0.1f, 1.f);
  SaliencyMap p = plain_saliency(net, img, 1);
  SaliencyMap g = guided_saliency(net, img, 1);
  for (size_t i = 0; i < p.values.numel(); ++i) CHECK(p.values[i] == g.values[i]);
}

TEST_CASE("guided rule silences the negative path of a two-neuron net") {
  // one input pixel, two 1x1 conv channels with weights 1 and 2 feeding a
  // linear head with weights +1 and -1. The head error is [+1,-1]; the guided
  // rule blocks the -1 path, the plain rule keeps it.
  NetworkSpec s;
  s.name = "two-neuron";
  s.num_classes = 1;
  s.layers = {LayerSpec::conv_relu(1, 2), LayerSpec::conv_linear(1, 1)};
  s.validate();
  Network net = Network::init(s, 1);
  net.params[0].kernel = Tensor({2, 1, 1, 1}, {1.f, 2.f});
  net.params[0].bias = {0.f, 0.f};
  net.params[1].kernel = Tensor({1, 2, 1, 1}, {1.f, -1.f});
  net.params[1].bias = {0.f};

  Tensor img({1, 1, 1}, {2.f});
  SaliencyMap plain = plain_saliency(net, img, 0);
  SaliencyMap guided = guided_saliency(net, img, 0);
  CHECK(plain.values[0] == doctest::Approx(-1.f));  // 1*1 + (-1)*2
  CHECK(guided.values[0] == doctest::Approx(1.f));  // negative path contributes 0
}

TEST_CASE("weighted saliency with an all-nonpositive class map is zero") {
  NetworkSpec s = testutil::tiny_bn_spec(2);
  Network net = Network::init(s, 21);
  // drive the class-0 map negative through a large negative head bias
  net.params.back().bias = {-100.f, 0.f};
  Rng rng(9);
  Tensor img = random_tensor({1, 16, 16}, rng);
  SaliencyMap w = weighted_saliency(net, img, 0);
  for (size_t i = 0; i < w.values.numel(); ++i) CHECK(w.values[i] == 0.f);
}

TEST_CASE("weighted saliency of a single active neuron is h times its gradient") {
  NetworkSpec s;
  s.name = "head-only";
  s.num_classes = 1;
  s.layers = {LayerSpec::conv_linear(1, 1)};
  s.validate();
  Network net = Network::init(s, 1);
  net.params[0].kernel[0] = 1.5f;
  net.params[0].bias[0] = 0.f;
  Tensor img({2, 2}, {2.f, -1.f, -1.f, -1.f});  // one positive map cell, h = 3
  SaliencyMap w = weighted_saliency(net, img, 0);
  CHECK(w.values.at(0, 0) == doctest::Approx(3.f * 1.5f));
  CHECK(w.values.at(0, 1) == 0.f);
  CHECK(w.values.at(1, 0) == 0.f);
  CHECK(w.values.at(1, 1) == 0.f);
}

TEST_CASE("single-pass weighted saliency equals the per-neuron sum (plain rule)") {
  // the identity is a linearity statement, so both sides run the plain rule;
  // the guided gates depend on the seed and are checked separately below
  Rng rng(10);
  for (uint64_t seed : {31ull, 32ull, 33ull}) {
    Network net = Network::init(testutil::tiny_bn_spec(3), seed);
    Tensor img = random_tensor({1, 12, 16}, rng);  // class maps 3x4
    for (int k = 0; k < 3; ++k) {
      SaliencyMap single = weighted_saliency(net, img, k, BackwardMode::PlainGradient);
      SaliencyMap summed =
          weighted_saliency_per_neuron(net, img, k, BackwardMode::PlainGradient);
      CHECK(max_abs_diff(single.values, summed.values) < 1e-5f);
    }
  }
}

TEST_CASE("single-pass equals per-neuron under the guided rule when signals stay positive") {
  NetworkSpec spec = relu_nobn_spec(2);
  Network net = Network::init(spec, 41);
  Rng rng(11);
  for (auto& p : net.params) {
    for (size_t i = 0; i < p.kernel.numel(); ++i) p.kernel[i] = rng.uniform(0.05f, 0.3f);
    for (auto& b : p.bias) b = 0.01f;
  }
  Tensor img = random_tensor({1, 8, 8}, rng, 0.1f, 1.f);
  SaliencyMap single = weighted_saliency(net, img, 0, BackwardMode::Guided);
  SaliencyMap summed = weighted_saliency_per_neuron(net, img, 0, BackwardMode::Guided);
  CHECK(max_abs_diff(single.values, summed.values) < 1e-5f);
}

TEST_CASE("scaling the final kernel by lambda scales weighted saliency by lambda^2") {
  Network net = Network::init(testutil::tiny_bn_spec(2), 51);
  Rng rng(12);
  Tensor img = random_tensor({1, 16, 16}, rng);
  SaliencyMap base = weighted_saliency(net, img, 0);
  const float lambda = 2.f;
  for (size_t i = 0; i < net.params.back().kernel.numel(); ++i)
    net.params.back().kernel[i] *= lambda;
  for (auto& b : net.params.back().bias) b *= lambda;
  SaliencyMap scaled = weighted_saliency(net, img, 0);
  float ref = 0.f;
  for (size_t i = 0; i < base.values.numel(); ++i) ref = std::max(ref, std::fabs(base.values[i]));
  for (size_t i = 0; i < base.values.numel(); ++i)
    CHECK(std::fabs(scaled.values[i] - lambda * lambda * base.values[i]) <= 1e-4f * ref + 1e-6f);
}

TEST_CASE("confidence map sign selection") {
  Tensor vals({4, 4});
  for (size_t i = 0; i < vals.numel(); ++i) vals[i] = -0.5f - 0.1f * float(i);
  SaliencyMap neg{vals, SaliencyMethod::WeightedGuided, 0};

  ConfidenceMap pos_only = confidence_map(neg, SignMode::PositiveOnly);
  for (size_t i = 0; i < pos_only.values.numel(); ++i) CHECK(pos_only.values[i] == 0.f);

  Rng rng(13);
  Tensor s = random_tensor({6, 6}, rng);
  Tensor s_neg = s;
  for (size_t i = 0; i < s_neg.numel(); ++i) s_neg[i] = -s_neg[i];
  ConfidenceMap a = confidence_map({s, SaliencyMethod::Plain, 0}, SignMode::PositiveOnly);
  ConfidenceMap b = confidence_map({s_neg, SaliencyMethod::Plain, 0}, SignMode::NegativeOnly);
  for (size_t i = 0; i < a.values.numel(); ++i) CHECK(a.values[i] == b.values[i]);

  // non-negativity under Both
  ConfidenceMap c = confidence_map({s, SaliencyMethod::Plain, 0}, SignMode::Both);
  for (size_t i = 0; i < c.values.numel(); ++i) CHECK(c.values[i] >= 0.f);
}

TEST_CASE("unit impulse blurs to the normalised 5x5 Gaussian stamp") {
  Tensor s({9, 9});
  s.at(4, 4) = 1.f;
  ConfidenceMap cm = confidence_map({s, SaliencyMethod::Plain, 0}, SignMode::Both);
  const Tensor g = gaussian5x5();
  double sum = 0, gsum = 0;
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      sum += cm.values.at(y, x);
      if (std::abs(y - 4) <= 2 && std::abs(x - 4) <= 2)
        CHECK(cm.values.at(y, x) == doctest::Approx(g.at(y - 2, x - 2)).epsilon(1e-6));
      else
        CHECK(cm.values.at(y, x) == 0.f);
    }
  for (size_t i = 0; i < g.numel(); ++i) gsum += g[i];
  CHECK(gsum == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));  // interior mass preserved
}

TEST_CASE("saliency map exports: PGM and exact raw round-trip") {
  TmpDir tmp("saliency_export");
  Rng rng(14);
  Tensor m = random_tensor({5, 7}, rng);
  export_map_raw(m, tmp.file("m.raw"));
  Tensor back = import_map_raw(tmp.file("m.raw"));
  REQUIRE(back.shape() == m.shape());
  for (size_t i = 0; i < m.numel(); ++i) CHECK(back[i] == m[i]);

  export_map_pgm(m, tmp.file("m.pgm"));
  std::ifstream f(tmp.file("m.pgm"), std::ios::binary);
  std::string header;
  f >> header;
  CHECK(header == "P5");
}

TEST_CASE("saliency rejects out-of-range classes") {
  Network net = Network::init(testutil::tiny_bn_spec(3), 1);
  Tensor img({1, 8, 8});
  CHECK_THROWS_AS(plain_saliency(net, img, 3), invalid_argument_error);
  CHECK_THROWS_AS(guided_saliency(net, img, -1), invalid_argument_error);
  CHECK_THROWS_AS(weighted_saliency(net, img, 5), invalid_argument_error);
}
