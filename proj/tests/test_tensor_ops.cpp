#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sononet/gradcheck.hpp"
#include "sononet/ops.hpp"
#include "test_util.hpp"

using namespace sononet;
using testutil::random_tensor;
using testutil::random_tensor_off_kink;

namespace {

// Direct six-nested-loop cross-correlation, the reference for conv2d.
Tensor naive_conv(const Tensor& x, const Tensor& k, const std::vector<float>& bias, int stride,
                  Padding pad) {
  const auto os = conv2d_out_shape(x.shape(), k.shape(), stride, pad);
  const int ph = pad == Padding::Same ? k.extent(2) / 2 : 0;
  const int pw = pad == Padding::Same ? k.extent(3) / 2 : 0;
  Tensor y(os);
  for (int b = 0; b < os[0]; ++b)
    for (int co = 0; co < os[1]; ++co)
      for (int oy = 0; oy < os[2]; ++oy)
        for (int ox = 0; ox < os[3]; ++ox) {
          double acc = bias[size_t(co)];
          for (int ci = 0; ci < x.extent(1); ++ci)
            for (int ky = 0; ky < k.extent(2); ++ky)
              for (int kx = 0; kx < k.extent(3); ++kx) {
                const int iy = oy * stride - ph + ky, ix = ox * stride - pw + kx;
                if (iy < 0 || iy >= x.extent(2) || ix < 0 || ix >= x.extent(3)) continue;
                acc += double(x.at(b, ci, iy, ix)) * k.at(co, ci, ky, kx);
              }
          y.at(b, co, oy, ox) = float(acc);
        }
  return y;
}

}  // namespace

TEST_CASE("tensor layout maps (b,c,y,x) row-major batch-outermost") {
  Tensor t({2, 3, 4, 5});
  CHECK(t.numel() == 2u * 3 * 4 * 5);
  CHECK(t.idx4(1, 2, 3, 4) == ((1 * 3 + 2) * 4 + 3) * 5 + 4);
  CHECK_THROWS_AS(Tensor({0, 1}), invalid_argument_error);
  CHECK_THROWS_AS(Tensor({1, 2, 3, 4, 5}), invalid_argument_error);
}

TEST_CASE("conv2d identity kernel") {
  Tensor x({1, 1, 1, 1});
  x[0] = 5.f;
  Tensor k({1, 1, 1, 1});
  k[0] = 1.f;
  Tensor y = conv2d(x, k, {0.f}, 1, Padding::Valid);
  CHECK(y.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(y[0] == doctest::Approx(5.f));
}

TEST_CASE("conv2d all-ones valid 3x3 sums to 9") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.f);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.f);
  Tensor y = conv2d(x, k, {0.f}, 1, Padding::Valid);
  CHECK(y.numel() == 1u);
  CHECK(y[0] == doctest::Approx(9.f));
}

TEST_CASE("conv2d matches the naive-loop oracle") {
  Rng rng(42);
  for (Padding pad : {Padding::Valid, Padding::Same}) {
    Tensor x = random_tensor({1, 2, 5, 5}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    std::vector<float> bias = {0.1f, -0.2f, 0.3f};
    Tensor got = conv2d(x, k, bias, 1, pad);
    Tensor want = naive_conv(x, k, bias, 1, pad);
    REQUIRE(got.same_shape(want));
    for (size_t i = 0; i < got.numel(); ++i) CHECK(std::fabs(got[i] - want[i]) < 1e-5f);
  }
}

TEST_CASE("conv2d stride-2 matches the oracle") {
  Rng rng(7);
  Tensor x = random_tensor({2, 3, 8, 10}, rng);
  Tensor k = random_tensor({4, 3, 3, 3}, rng);
  std::vector<float> bias(4, 0.25f);
  for (Padding pad : {Padding::Valid, Padding::Same}) {
    Tensor got = conv2d(x, k, bias, 2, pad);
    Tensor want = naive_conv(x, k, bias, 2, pad);
    REQUIRE(got.same_shape(want));
    for (size_t i = 0; i < got.numel(); ++i) CHECK(std::fabs(got[i] - want[i]) < 1e-5f);
  }
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
  Tensor x({1, 2, 5, 5});
  Tensor k({3, 3, 3, 3});
  try {
    conv2d(x, k, {0, 0, 0}, 1, Padding::Same);
    FAIL("expected a shape error");
  } catch (const invalid_argument_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1x2x5x5]") != std::string::npos);
    CHECK(msg.find("[3x3x3x3]") != std::string::npos);
  }
}

TEST_CASE("conv2d SamePad stride 1 preserves spatial extents") {
  Rng rng(3);
  Tensor x = random_tensor({1, 1, 6, 8}, rng);
  Tensor k = random_tensor({2, 1, 5, 5}, rng);
  Tensor y = conv2d(x, k, {0.f, 0.f}, 1, Padding::Same);
  CHECK(y.shape() == std::vector<int>{1, 2, 6, 8});
}

TEST_CASE("conv2d is linear in the input for fixed weights") {
  Rng rng(11);
  Tensor x = random_tensor({1, 2, 6, 6}, rng);
  Tensor y = random_tensor({1, 2, 6, 6}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng);
  const std::vector<float> zero_bias(3, 0.f);
  const float alpha = 0.7f, beta = -1.3f;
  Tensor mix({1, 2, 6, 6});
  for (size_t i = 0; i < mix.numel(); ++i) mix[i] = alpha * x[i] + beta * y[i];
  Tensor lhs = conv2d(mix, k, zero_bias, 1, Padding::Same);
  Tensor fx = conv2d(x, k, zero_bias, 1, Padding::Same);
  Tensor fy = conv2d(y, k, zero_bias, 1, Padding::Same);
  for (size_t i = 0; i < lhs.numel(); ++i)
    CHECK(std::fabs(lhs[i] - (alpha * fx[i] + beta * fy[i])) < 1e-4f);
}

TEST_CASE("conv2d analytic gradients match finite differences") {
  Rng rng(13);
  Tensor x = random_tensor({1, 2, 5, 6}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng);
  std::vector<float> bias = {0.1f, 0.2f, -0.1f};

  SUBCASE("w.r.t. input") {
    DiffOp op{[&](const Tensor& p) { return conv2d(p, k, bias, 1, Padding::Same); },
              [&](const Tensor& p, const Tensor& w) {
                return conv2d_backward(p, k, 1, Padding::Same, w).input;
              }};
    CHECK(finite_diff_check(op, x, 0.05f, 100, rng) < 1e-3f);
  }
  SUBCASE("w.r.t. kernel") {
    DiffOp op{[&](const Tensor& p) { return conv2d(x, p, bias, 1, Padding::Same); },
              [&](const Tensor& p, const Tensor& w) {
                return conv2d_backward(x, p, 1, Padding::Same, w).kernel;
              }};
    CHECK(finite_diff_check(op, k, 0.05f, 100, rng) < 1e-3f);
  }
  SUBCASE("w.r.t. bias") {
    Tensor b0({3});
    b0[0] = 0.1f;
    b0[1] = 0.2f;
    b0[2] = -0.1f;
    DiffOp op{[&](const Tensor& p) {
                return conv2d(x, k, {p[0], p[1], p[2]}, 1, Padding::Same);
              },
              [&](const Tensor& p, const Tensor& w) {
                auto g = conv2d_backward(x, k, 1, Padding::Same, w).bias;
                (void)p;
                return Tensor({3}, {g[0], g[1], g[2]});
              }};
    CHECK(finite_diff_check(op, b0, 0.05f, 100, rng) < 1e-3f);
  }
  SUBCASE("backward input grad only matches the full backward") {
    Tensor dy = random_tensor(conv2d_out_shape(x.shape(), k.shape(), 1, Padding::Same), rng);
    Tensor a = conv2d_backward(x, k, 1, Padding::Same, dy).input;
    Tensor b = conv2d_backward_input(k, 1, Padding::Same, dy, x.shape());
    for (size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("maxpool2 basics") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  MaxPoolOut r = maxpool2(x);
  CHECK(r.output.numel() == 1u);
  CHECK(r.output[0] == 4.f);
  CHECK(r.argmax[0] == 3);  // position (1,1)

  Tensor c = Tensor::full({1, 2, 4, 4}, 2.5f);
  MaxPoolOut rc = maxpool2(c);
  for (size_t i = 0; i < rc.output.numel(); ++i) CHECK(rc.output[i] == 2.5f);

  CHECK_THROWS_AS(maxpool2(Tensor({1, 1, 3, 4})), invalid_argument_error);
  CHECK_THROWS_AS(maxpool2(Tensor({1, 1, 4, 5})), invalid_argument_error);
}

TEST_CASE("maxpool2 matches brute force and finite differences") {
  // distinct values with gaps, keeping the argmax stable under probing
  std::vector<size_t> perm(64);
  for (size_t i = 0; i < 64; ++i) perm[i] = i;
  Rng rng(5);
  rng.shuffle(perm);
  Tensor x({1, 1, 8, 8});
  for (size_t i = 0; i < 64; ++i) x[i] = 0.21f * float(perm[i]) - 6.f;

  MaxPoolOut r = maxpool2(x);
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox) {
      float m = -1e9f;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) m = std::max(m, x.at(0, 0, oy * 2 + dy, ox * 2 + dx));
      CHECK(r.output.at(0, 0, oy, ox) == m);
    }

  DiffOp op{[&](const Tensor& p) { return maxpool2(p).output; },
            [&](const Tensor& p, const Tensor& w) {
              MaxPoolOut f = maxpool2(p);
              return maxpool2_backward(f, p.shape(), w);
            }};
  CHECK(finite_diff_check(op, x, 0.05f, 100, rng) < 1e-3f);
}

TEST_CASE("batchnorm train mode on already-normal input is near identity") {
  Rng rng(17);
  // build a batch with exact per-channel mean 0 and variance 1
  Tensor x({2, 2, 2, 2});
  for (int c = 0; c < 2; ++c) {
    std::vector<float> vals(8);
    for (auto& v : vals) v = rng.uniform(-1.f, 1.f);
    double mean = 0, var = 0;
    for (float v : vals) mean += v;
    mean /= 8;
    for (float v : vals) var += (v - mean) * (v - mean);
    var /= 8;
    const double s = std::sqrt(var);
    size_t i = 0;
    for (int b = 0; b < 2; ++b)
      for (int y = 0; y < 2; ++y)
        for (int xx = 0; xx < 2; ++xx) x.at(b, c, y, xx) = float((vals[i++] - mean) / s);
  }
  BatchNormParams p = BatchNormParams::identity(2);
  Tensor y = batchnorm(x, p, PhaseMode::Train);
  for (size_t i = 0; i < y.numel(); ++i) CHECK(std::fabs(y[i] - x[i]) < 1e-3f);
}

TEST_CASE("batchnorm gamma zero collapses to beta") {
  Rng rng(19);
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  BatchNormParams p = BatchNormParams::identity(3);
  p.gamma = {0.f, 0.f, 0.f};
  p.beta = {0.5f, -1.f, 2.f};
  for (PhaseMode mode : {PhaseMode::Train, PhaseMode::Infer}) {
    Tensor y = batchnorm(x, p, mode);
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i)
          CHECK(y.at(b, c, i / 4, i % 4) == doctest::Approx(p.beta[size_t(c)]));
  }
}

TEST_CASE("batchnorm output statistics and gradients") {
  Rng rng(23);
  Tensor x = random_tensor({4, 3, 6, 6}, rng, -2.f, 2.f);
  BatchNormParams p = BatchNormParams::identity(3);
  p.gamma = {1.3f, 0.8f, 1.1f};
  p.beta = {0.2f, -0.4f, 0.f};

  BatchNormParams run = p;
  Tensor y = batchnorm(x, run, PhaseMode::Train);
  const size_t plane = 36;
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (int b = 0; b < 4; ++b)
      for (size_t i = 0; i < plane; ++i) mean += y.at(b, c, int(i / 6), int(i % 6));
    mean /= 4 * double(plane);
    for (int b = 0; b < 4; ++b)
      for (size_t i = 0; i < plane; ++i) {
        const double d = y.at(b, c, int(i / 6), int(i % 6)) - mean;
        var += d * d;
      }
    var /= 4 * double(plane);
    CHECK(std::fabs(mean - p.beta[size_t(c)]) < 1e-4);
    CHECK(std::fabs(var - double(p.gamma[size_t(c)]) * p.gamma[size_t(c)]) < 1e-4);
  }

  SUBCASE("input gradient") {
    DiffOp op{[&](const Tensor& t) {
                BatchNormParams q = p;
                return batchnorm(t, q, PhaseMode::Train);
              },
              [&](const Tensor& t, const Tensor& w) {
                BatchNormParams q = p;
                BatchNormCache cache;
                batchnorm(t, q, PhaseMode::Train, &cache);
                return batchnorm_backward(cache, q.gamma, w).input;
              }};
    CHECK(finite_diff_check(op, x, 0.02f, 100, rng) < 1e-3f);
  }
  SUBCASE("gamma and beta gradients") {
    Tensor g0({3}, {1.3f, 0.8f, 1.1f});
    DiffOp op_gamma{[&](const Tensor& t) {
                      BatchNormParams q = p;
                      q.gamma = {t[0], t[1], t[2]};
                      return batchnorm(x, q, PhaseMode::Train);
                    },
                    [&](const Tensor& t, const Tensor& w) {
                      BatchNormParams q = p;
                      q.gamma = {t[0], t[1], t[2]};
                      BatchNormCache cache;
                      batchnorm(x, q, PhaseMode::Train, &cache);
                      auto g = batchnorm_backward(cache, q.gamma, w).gamma;
                      return Tensor({3}, {g[0], g[1], g[2]});
                    }};
    CHECK(finite_diff_check(op_gamma, g0, 0.02f, 100, rng) < 1e-3f);

    Tensor b0({3}, {0.2f, -0.4f, 0.f});
    DiffOp op_beta{[&](const Tensor& t) {
                     BatchNormParams q = p;
                     q.beta = {t[0], t[1], t[2]};
                     return batchnorm(x, q, PhaseMode::Train);
                   },
                   [&](const Tensor& t, const Tensor& w) {
                     BatchNormParams q = p;
                     q.beta = {t[0], t[1], t[2]};
                     BatchNormCache cache;
                     batchnorm(x, q, PhaseMode::Train, &cache);
                     auto g = batchnorm_backward(cache, q.gamma, w).beta;
                     return Tensor({3}, {g[0], g[1], g[2]});
                   }};
    CHECK(finite_diff_check(op_beta, b0, 0.02f, 100, rng) < 1e-3f);
  }
}

TEST_CASE("batchnorm running statistics converge to batch statistics") {
  Rng rng(29);
  Tensor x = random_tensor({4, 2, 4, 4}, rng, 1.f, 3.f);  // mean ~2
  BatchNormParams p = BatchNormParams::identity(2);
  for (int i = 0; i < 200; ++i) batchnorm(x, p, PhaseMode::Train);
  // EMA fixed point equals the (constant) batch statistics
  for (int c = 0; c < 2; ++c) CHECK(p.running_mean[size_t(c)] == doctest::Approx(2.0).epsilon(0.2));
  Tensor yi = batchnorm(x, p, PhaseMode::Infer);
  Tensor yt = batchnorm(x, p, PhaseMode::Train);
  for (size_t i = 0; i < yi.numel(); ++i) CHECK(std::fabs(yi[i] - yt[i]) < 1e-3f);
}

TEST_CASE("batchnorm rejects undersized train batches") {
  BatchNormParams p = BatchNormParams::identity(2);
  CHECK_THROWS_AS(batchnorm(Tensor({1, 2, 1, 1}), p, PhaseMode::Train), invalid_argument_error);
  CHECK_NOTHROW(batchnorm(Tensor({1, 2, 1, 1}), p, PhaseMode::Infer));
}

TEST_CASE("relu guided rule truth table") {
  auto bwd = [](float x, float d, BackwardMode m) {
    Tensor xt({1}, {x}), dt({1}, {d});
    return relu_backward(xt, dt, m)[0];
  };
  CHECK(bwd(2.f, 3.f, BackwardMode::Guided) == 3.f);
  CHECK(bwd(-1.f, 3.f, BackwardMode::Guided) == 0.f);
  CHECK(bwd(2.f, -3.f, BackwardMode::Guided) == 0.f);
  CHECK(bwd(2.f, -3.f, BackwardMode::PlainGradient) == -3.f);
  CHECK(bwd(-1.f, 3.f, BackwardMode::PlainGradient) == 0.f);
}

TEST_CASE("guided equals plain when all signals are positive") {
  Rng rng(31);
  Tensor x = random_tensor({1, 2, 4, 4}, rng, 0.1f, 2.f);
  Tensor d = random_tensor({1, 2, 4, 4}, rng, 0.1f, 2.f);
  Tensor a = relu_backward(x, d, BackwardMode::Guided);
  Tensor b = relu_backward(x, d, BackwardMode::PlainGradient);
  for (size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("relu forward and gradient away from the kink") {
  Tensor x({1}, {0.5f});
  CHECK(relu(x)[0] == 0.5f);
  Rng rng(37);
  DiffOp op{[](const Tensor& p) { return relu(p); },
            [](const Tensor& p, const Tensor& w) {
              return relu_backward(p, w, BackwardMode::PlainGradient);
            }};
  CHECK(finite_diff_check(op, x, 0.01f, 10, rng) < 1e-4f);

  Tensor big = random_tensor_off_kink({1, 2, 6, 6}, rng);
  CHECK(finite_diff_check(op, big, 0.02f, 100, rng) < 1e-3f);
}

TEST_CASE("spatial_mean forward, backward and shift property") {
  Tensor c = Tensor::full({1, 2, 3, 4}, 1.75f);
  Tensor a = spatial_mean(c);
  CHECK(a.at(0, 0) == doctest::Approx(1.75f));
  CHECK(a.at(0, 1) == doctest::Approx(1.75f));

  // 14x18 map: every backward cell receives incoming/252
  Tensor g({1, 1}, {2.f});
  Tensor dx = spatial_mean_backward(g, 14, 18);
  CHECK(dx.numel() == 252u);
  for (size_t i = 0; i < dx.numel(); ++i) CHECK(dx[i] == doctest::Approx(2.f / 252.f));

  Rng rng(41);
  Tensor m = random_tensor({1, 1, 14, 18}, rng);
  double s = 0;
  for (size_t i = 0; i < m.numel(); ++i) s += m[i];
  CHECK(std::fabs(spatial_mean(m).at(0, 0) - float(s / 252.0)) < 1e-6f);

  // adding a constant to every cell shifts the mean by that constant
  Tensor shifted = m;
  for (size_t i = 0; i < shifted.numel(); ++i) shifted[i] += 0.625f;
  CHECK(spatial_mean(shifted).at(0, 0) ==
        doctest::Approx(spatial_mean(m).at(0, 0) + 0.625f).epsilon(1e-5));
}

TEST_CASE("softmax_xent values and gradient") {
  // equal logits over 14 classes -> ln 14
  Tensor logits = Tensor::full({1, 14}, 0.37f);
  XentOut r = softmax_xent(logits, {5});
  CHECK(r.loss == doctest::Approx(std::log(14.0)).epsilon(1e-5));

  // a dominant correct logit -> loss ~ 0
  Tensor dom({1, 3});
  dom.at(0, 1) = 1000.f;
  CHECK(softmax_xent(dom, {1}).loss == doctest::Approx(0.f).epsilon(1e-6));

  CHECK_THROWS_AS(softmax_xent(dom, {3}), invalid_argument_error);
  CHECK_THROWS_AS(softmax_xent(dom, {-1}), invalid_argument_error);

  // bounded logits and a small batch keep every gradient entry well above
  // the 32-bit quantisation floor
  Rng rng(43);
  Tensor l = random_tensor({2, 6}, rng, -1.f, 1.f);
  const std::vector<int> labels = {0, 3};
  DiffOp op{[&](const Tensor& p) {
              XentOut o = softmax_xent(p, labels);
              return Tensor({1}, {o.loss});
            },
            [&](const Tensor& p, const Tensor& w) {
              XentOut o = softmax_xent(p, labels);
              Tensor g = o.grad;
              for (size_t i = 0; i < g.numel(); ++i) g[i] *= w[0];
              return g;
            }};
  CHECK(finite_diff_check(op, l, 0.03f, 100, rng) < 1e-3f);

  // independent double-precision loss oracle against the analytic gradient
  auto ref_loss = [&](const Tensor& p) {
    double total = 0;
    for (int b = 0; b < 2; ++b) {
      double mx = p.at(b, 0);
      for (int j = 1; j < 6; ++j) mx = std::max(mx, double(p.at(b, j)));
      double z = 0;
      for (int j = 0; j < 6; ++j) z += std::exp(double(p.at(b, j)) - mx);
      total -= double(p.at(b, labels[size_t(b)])) - mx - std::log(z);
    }
    return total / 2;
  };
  XentOut base = softmax_xent(l, labels);
  Tensor probe = l;
  for (size_t i = 0; i < l.numel(); ++i) {
    const float orig = probe[i];
    probe[i] = orig + 0.005f;
    const double lp = ref_loss(probe);
    probe[i] = orig - 0.005f;
    const double lm = ref_loss(probe);
    probe[i] = orig;
    const double numeric = (lp - lm) / 0.01;
    CHECK(std::fabs(numeric - double(base.grad[i])) < 1e-4);
  }

  // probabilities sum to one per row
  Tensor probs = softmax_rows(l);
  for (int b = 0; b < 2; ++b) {
    double s = 0;
    for (int k = 0; k < 6; ++k) s += probs.at(b, k);
    CHECK(std::fabs(s - 1.0) < 1e-5);
  }
}

TEST_CASE("finite_diff_check is exact for a linear op") {
  Rng rng(47);
  Tensor x({2, 3}, {0.5f, -0.25f, 1.f, 0.75f, -0.5f, 0.25f});
  DiffOp op{[](const Tensor& p) {
              Tensor y = p;
              for (size_t i = 0; i < y.numel(); ++i) y[i] *= 3.f;
              return y;
            },
            [](const Tensor& p, const Tensor& w) {
              Tensor g = w;
              (void)p;
              for (size_t i = 0; i < g.numel(); ++i) g[i] *= 3.f;
              return g;
            }};
  CHECK(finite_diff_check(op, x, 0.25f, 100, rng) < 1e-6f);
}
