#include "sononet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gemm.hpp"

namespace sononet {

// -------------------------------------------------------------- conv2d

static int pad_amount(int k, Padding pad) { return pad == Padding::Same ? k / 2 : 0; }

std::vector<int> conv2d_out_shape(const std::vector<int>& is, const std::vector<int>& ks,
                                  int stride, Padding pad) {
  const int ph = pad_amount(ks[2], pad), pw = pad_amount(ks[3], pad);
  const int ho = (is[2] + 2 * ph - ks[2]) / stride + 1;
  const int wo = (is[3] + 2 * pw - ks[3]) / stride + 1;
  if (is[2] + 2 * ph < ks[2] || is[3] + 2 * pw < ks[3])
    throw invalid_argument_error("conv2d: kernel " + shape_str(ks) +
                                 " larger than padded input " + shape_str(is));
  return {is[0], ks[0], ho, wo};
}

static void check_conv_args(const Tensor& input, const Tensor& kernel,
                            const std::vector<float>& bias, int stride) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw invalid_argument_error("conv2d: need rank-4 input and kernel, got " +
                                 input.shape_str() + " and " + kernel.shape_str());
  if (kernel.extent(1) != input.extent(1))
    throw invalid_argument_error("conv2d: channel mismatch, input " + input.shape_str() +
                                 " vs kernel " + kernel.shape_str());
  if (int(bias.size()) != kernel.extent(0))
    throw invalid_argument_error("conv2d: bias size " + std::to_string(bias.size()) +
                                 " vs kernel " + kernel.shape_str());
  if (stride < 1) throw invalid_argument_error("conv2d: stride must be >= 1");
}

// One batch item: [Cin,H,W] -> [Cin*kh*kw, Ho*Wo] with zero padding.
static void im2col(const float* x, int cin, int h, int w, int kh, int kw, int stride, int ph,
                   int pw, int ho, int wo, float* cols) {
  for (int c = 0; c < cin; ++c) {
    const float* xc = x + size_t(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* row = cols + size_t((c * kh + ky) * kw + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - ph + ky;
          float* dst = row + size_t(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::memset(dst, 0, sizeof(float) * wo);
            continue;
          }
          const float* src = xc + size_t(iy) * w;
          if (stride == 1) {
            const int x0 = -pw + kx;
            int ox = 0;
            for (; ox < wo && x0 + ox < 0; ++ox) dst[ox] = 0.f;
            const int run_end = std::min(wo, w - x0);
            if (run_end > ox) {
              std::memcpy(dst + ox, src + x0 + ox, sizeof(float) * size_t(run_end - ox));
              ox = run_end;
            }
            for (; ox < wo; ++ox) dst[ox] = 0.f;
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pw + kx;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.f;
            }
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-accumulate columns back into the input layout.
static void col2im(const float* cols, int cin, int h, int w, int kh, int kw, int stride, int ph,
                   int pw, int ho, int wo, float* dx) {
  for (int c = 0; c < cin; ++c) {
    float* xc = dx + size_t(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* row = cols + size_t((c * kh + ky) * kw + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - ph + ky;
          if (iy < 0 || iy >= h) continue;
          const float* src = row + size_t(oy) * wo;
          float* dst = xc + size_t(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pw + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::vector<float>& bias,
              int stride, Padding pad) {
  check_conv_args(input, kernel, bias, stride);
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  const auto os = conv2d_out_shape(is, ks, stride, pad);
  const int b = is[0], cin = is[1], h = is[2], w = is[3];
  const int cout = ks[0], kh = ks[2], kw = ks[3];
  const int ho = os[2], wo = os[3];
  const int ph = pad_amount(kh, pad), pw = pad_amount(kw, pad);
  const int ckk = cin * kh * kw;
  const size_t spatial = size_t(ho) * wo;

  Tensor out(os);
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && ph == 0 && pw == 0);
  std::vector<float> cols;
  if (!pointwise) cols.resize(size_t(ckk) * spatial);

  for (int n = 0; n < b; ++n) {
    const float* xb = input.data() + size_t(n) * cin * h * w;
    float* yb = out.data() + size_t(n) * cout * spatial;
    const float* mat = xb;
    if (!pointwise) {
      im2col(xb, cin, h, w, kh, kw, stride, ph, pw, ho, wo, cols.data());
      mat = cols.data();
    }
    gemm_nn(kernel.data(), mat, yb, cout, ckk, int(spatial), false);
    for (int c = 0; c < cout; ++c) {
      float* yc = yb + size_t(c) * spatial;
      const float bc = bias[size_t(c)];
      for (size_t i = 0; i < spatial; ++i) yc[i] += bc;
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, int stride, Padding pad,
                            const Tensor& grad_out) {
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  const auto os = conv2d_out_shape(is, ks, stride, pad);
  if (grad_out.shape() != os)
    throw invalid_argument_error("conv2d_backward: grad shape " + grad_out.shape_str() +
                                 " vs expected " + shape_str(os));
  const int b = is[0], cin = is[1], h = is[2], w = is[3];
  const int cout = ks[0], kh = ks[2], kw = ks[3];
  const int ho = os[2], wo = os[3];
  const int ph = pad_amount(kh, pad), pw = pad_amount(kw, pad);
  const int ckk = cin * kh * kw;
  const size_t spatial = size_t(ho) * wo;

  Conv2dGrads g{Tensor(is), Tensor(ks), std::vector<float>(size_t(cout), 0.f)};
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && ph == 0 && pw == 0);
  std::vector<float> cols, dcols;
  if (!pointwise) {
    cols.resize(size_t(ckk) * spatial);
    dcols.resize(size_t(ckk) * spatial);
  }

  for (int n = 0; n < b; ++n) {
    const float* xb = input.data() + size_t(n) * cin * h * w;
    const float* dyb = grad_out.data() + size_t(n) * cout * spatial;
    float* dxb = g.input.data() + size_t(n) * cin * h * w;

    for (int c = 0; c < cout; ++c) {
      const float* dyc = dyb + size_t(c) * spatial;
      double s = 0;
      for (size_t i = 0; i < spatial; ++i) s += dyc[i];
      g.bias[size_t(c)] += float(s);
    }

    if (pointwise) {
      gemm_nt(dyb, xb, g.kernel.data(), cout, int(spatial), ckk, true);
      gemm_tn(kernel.data(), dyb, dxb, ckk, cout, int(spatial), false);
    } else {
      im2col(xb, cin, h, w, kh, kw, stride, ph, pw, ho, wo, cols.data());
      gemm_nt(dyb, cols.data(), g.kernel.data(), cout, int(spatial), ckk, true);
      gemm_tn(kernel.data(), dyb, dcols.data(), ckk, cout, int(spatial), false);
      col2im(dcols.data(), cin, h, w, kh, kw, stride, ph, pw, ho, wo, dxb);
    }
  }
  return g;
}

Tensor conv2d_backward_input(const Tensor& kernel, int stride, Padding pad,
                             const Tensor& grad_out, const std::vector<int>& input_shape) {
  const auto& ks = kernel.shape();
  const auto os = conv2d_out_shape(input_shape, ks, stride, pad);
  if (grad_out.shape() != os)
    throw invalid_argument_error("conv2d_backward_input: grad shape " + grad_out.shape_str() +
                                 " vs expected " + shape_str(os));
  const int b = input_shape[0], cin = input_shape[1], h = input_shape[2], w = input_shape[3];
  const int cout = ks[0], kh = ks[2], kw = ks[3];
  const int ho = os[2], wo = os[3];
  const int ph = pad_amount(kh, pad), pw = pad_amount(kw, pad);
  const int ckk = cin * kh * kw;
  const size_t spatial = size_t(ho) * wo;

  Tensor dx(input_shape);
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && ph == 0 && pw == 0);
  std::vector<float> dcols;
  if (!pointwise) dcols.resize(size_t(ckk) * spatial);

  for (int n = 0; n < b; ++n) {
    const float* dyb = grad_out.data() + size_t(n) * cout * spatial;
    float* dxb = dx.data() + size_t(n) * cin * h * w;
    if (pointwise) {
      gemm_tn(kernel.data(), dyb, dxb, ckk, cout, int(spatial), false);
    } else {
      gemm_tn(kernel.data(), dyb, dcols.data(), ckk, cout, int(spatial), false);
      col2im(dcols.data(), cin, h, w, kh, kw, stride, ph, pw, ho, wo, dxb);
    }
  }
  return dx;
}

// -------------------------------------------------------------- maxpool2

MaxPoolOut maxpool2(const Tensor& input) {
  if (input.rank() != 4)
    throw invalid_argument_error("maxpool2: need rank-4 input, got " + input.shape_str());
  const int b = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);
  if (h % 2 || w % 2)
    throw invalid_argument_error("maxpool2: spatial extents must be even, got " +
                                 input.shape_str());
  const int ho = h / 2, wo = w / 2;
  MaxPoolOut r{Tensor({b, c, ho, wo}), {}};
  r.argmax.resize(r.output.numel());
  const float* x = input.data();
  float* y = r.output.data();
  int32_t* am = r.argmax.data();
  for (int n = 0; n < b * c; ++n) {
    const float* xp = x + size_t(n) * h * w;
    const size_t base = size_t(n) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const int iy = oy * 2, ix = ox * 2;
        int best = iy * w + ix;
        float bv = xp[best];
        const int cand[3] = {iy * w + ix + 1, (iy + 1) * w + ix, (iy + 1) * w + ix + 1};
        for (int k : cand)
          if (xp[k] > bv) {
            bv = xp[k];
            best = k;
          }
        *y++ = bv;
        *am++ = int32_t(base + size_t(best));
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const MaxPoolOut& fwd, const std::vector<int>& input_shape,
                         const Tensor& grad_out) {
  check_same_shape(fwd.output, grad_out, "maxpool2_backward");
  return maxpool2_backward(fwd.argmax, input_shape, grad_out);
}

Tensor maxpool2_backward(const std::vector<int32_t>& argmax, const std::vector<int>& input_shape,
                         const Tensor& grad_out) {
  if (argmax.size() != grad_out.numel())
    throw invalid_argument_error("maxpool2_backward: argmax size " +
                                 std::to_string(argmax.size()) + " vs grad " +
                                 grad_out.shape_str());
  Tensor dx(input_shape);
  const float* dy = grad_out.data();
  for (size_t i = 0; i < argmax.size(); ++i) dx[size_t(argmax[i])] += dy[i];
  return dx;
}

// -------------------------------------------------------------- batchnorm

BatchNormParams BatchNormParams::identity(int channels) {
  BatchNormParams p;
  p.gamma.assign(size_t(channels), 1.f);
  p.beta.assign(size_t(channels), 0.f);
  p.running_mean.assign(size_t(channels), 0.f);
  p.running_var.assign(size_t(channels), 1.f);
  return p;
}

Tensor batchnorm(const Tensor& input, BatchNormParams& params, PhaseMode mode,
                 BatchNormCache* cache, float eps, float momentum) {
  if (input.rank() != 4)
    throw invalid_argument_error("batchnorm: need rank-4 input, got " + input.shape_str());
  const int b = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);
  if (int(params.gamma.size()) != c)
    throw invalid_argument_error("batchnorm: " + std::to_string(params.gamma.size()) +
                                 " channels of parameters vs input " + input.shape_str());
  const size_t plane = size_t(h) * w;
  const size_t n_per_ch = size_t(b) * plane;
  Tensor out(input.shape());

  if (mode == PhaseMode::Train) {
    if (n_per_ch < 2)
      throw invalid_argument_error("batchnorm: train mode needs batch*H*W >= 2 per channel");
    if (cache) {
      cache->mode = PhaseMode::Train;
      cache->x_hat = Tensor(input.shape());
      cache->inv_std.assign(size_t(c), 0.f);
    }
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0, sq = 0;
      for (int n = 0; n < b; ++n) {
        const float* x = input.data() + (size_t(n) * c + ch) * plane;
        for (size_t i = 0; i < plane; ++i) {
          sum += x[i];
          sq += double(x[i]) * x[i];
        }
      }
      const double mean = sum / double(n_per_ch);
      const double var = std::max(0.0, sq / double(n_per_ch) - mean * mean);
      const float inv_std = float(1.0 / std::sqrt(var + eps));
      const float g = params.gamma[size_t(ch)], bt = params.beta[size_t(ch)];
      for (int n = 0; n < b; ++n) {
        const size_t off = (size_t(n) * c + ch) * plane;
        const float* x = input.data() + off;
        float* y = out.data() + off;
        float* xh = cache ? cache->x_hat.data() + off : nullptr;
        for (size_t i = 0; i < plane; ++i) {
          const float v = (x[i] - float(mean)) * inv_std;
          if (xh) xh[i] = v;
          y[i] = g * v + bt;
        }
      }
      if (cache) cache->inv_std[size_t(ch)] = inv_std;
      params.running_mean[size_t(ch)] =
          (1.f - momentum) * params.running_mean[size_t(ch)] + momentum * float(mean);
      params.running_var[size_t(ch)] =
          (1.f - momentum) * params.running_var[size_t(ch)] + momentum * float(var);
    }
  } else {
    if (cache) {
      cache->mode = PhaseMode::Infer;
      cache->scale.assign(size_t(c), 0.f);
    }
    for (int ch = 0; ch < c; ++ch) {
      const float inv_std = 1.f / std::sqrt(params.running_var[size_t(ch)] + eps);
      const float scale = params.gamma[size_t(ch)] * inv_std;
      const float shift = params.beta[size_t(ch)] - params.running_mean[size_t(ch)] * scale;
      if (cache) cache->scale[size_t(ch)] = scale;
      for (int n = 0; n < b; ++n) {
        const size_t off = (size_t(n) * c + ch) * plane;
        const float* x = input.data() + off;
        float* y = out.data() + off;
        for (size_t i = 0; i < plane; ++i) y[i] = scale * x[i] + shift;
      }
    }
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const std::vector<float>& gamma,
                                  const Tensor& grad_out) {
  if (cache.mode != PhaseMode::Train)
    throw invalid_argument_error("batchnorm_backward: cache was not built in train mode");
  check_same_shape(cache.x_hat, grad_out, "batchnorm_backward");
  const int b = grad_out.extent(0), c = grad_out.extent(1);
  const size_t plane = size_t(grad_out.extent(2)) * grad_out.extent(3);
  const double n = double(b) * double(plane);

  BatchNormGrads g{Tensor(grad_out.shape()), std::vector<float>(size_t(c), 0.f),
                   std::vector<float>(size_t(c), 0.f)};
  for (int ch = 0; ch < c; ++ch) {
    double dbeta = 0, dgamma = 0;
    for (int nb = 0; nb < b; ++nb) {
      const size_t off = (size_t(nb) * c + ch) * plane;
      const float* dy = grad_out.data() + off;
      const float* xh = cache.x_hat.data() + off;
      for (size_t i = 0; i < plane; ++i) {
        dbeta += dy[i];
        dgamma += double(dy[i]) * xh[i];
      }
    }
    g.beta[size_t(ch)] = float(dbeta);
    g.gamma[size_t(ch)] = float(dgamma);
    const float k = gamma[size_t(ch)] * cache.inv_std[size_t(ch)];
    const float mean_dy = float(dbeta / n), mean_dyxh = float(dgamma / n);
    for (int nb = 0; nb < b; ++nb) {
      const size_t off = (size_t(nb) * c + ch) * plane;
      const float* dy = grad_out.data() + off;
      const float* xh = cache.x_hat.data() + off;
      float* dx = g.input.data() + off;
      for (size_t i = 0; i < plane; ++i)
        dx[i] = k * (dy[i] - mean_dy - xh[i] * mean_dyxh);
    }
  }
  return g;
}

Tensor batchnorm_backward_infer(const BatchNormCache& cache, const Tensor& grad_out) {
  if (cache.mode != PhaseMode::Infer)
    throw invalid_argument_error("batchnorm_backward_infer: cache was not built in infer mode");
  const int b = grad_out.extent(0), c = grad_out.extent(1);
  const size_t plane = size_t(grad_out.extent(2)) * grad_out.extent(3);
  Tensor dx(grad_out.shape());
  for (int nb = 0; nb < b; ++nb)
    for (int ch = 0; ch < c; ++ch) {
      const size_t off = (size_t(nb) * c + ch) * plane;
      const float* dy = grad_out.data() + off;
      float* d = dx.data() + off;
      const float s = cache.scale[size_t(ch)];
      for (size_t i = 0; i < plane; ++i) d[i] = s * dy[i];
    }
  return dx;
}

// -------------------------------------------------------------- relu

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  const float* x = input.data();
  float* y = out.data();
  for (size_t i = 0; i < input.numel(); ++i) y[i] = x[i] > 0.f ? x[i] : 0.f;
  return out;
}

Tensor relu_backward(const Tensor& stored_input, const Tensor& grad_out, BackwardMode mode) {
  check_same_shape(stored_input, grad_out, "relu_backward");
  Tensor dx(grad_out.shape());
  const float* x = stored_input.data();
  const float* dy = grad_out.data();
  float* d = dx.data();
  if (mode == BackwardMode::Guided) {
    for (size_t i = 0; i < dx.numel(); ++i)
      d[i] = (x[i] > 0.f && dy[i] > 0.f) ? dy[i] : 0.f;
  } else {
    for (size_t i = 0; i < dx.numel(); ++i) d[i] = x[i] > 0.f ? dy[i] : 0.f;
  }
  return dx;
}

// -------------------------------------------------------------- spatial mean

Tensor spatial_mean(const Tensor& input) {
  if (input.rank() != 4)
    throw invalid_argument_error("spatial_mean: need rank-4 input, got " + input.shape_str());
  const int b = input.extent(0), k = input.extent(1);
  const size_t plane = size_t(input.extent(2)) * input.extent(3);
  Tensor out({b, k});
  for (int n = 0; n < b; ++n)
    for (int c = 0; c < k; ++c) {
      const float* x = input.data() + (size_t(n) * k + c) * plane;
      double s = 0;
      for (size_t i = 0; i < plane; ++i) s += x[i];
      out.at(n, c) = float(s / double(plane));
    }
  return out;
}

Tensor spatial_mean_backward(const Tensor& grad_out, int height, int width) {
  if (grad_out.rank() != 2)
    throw invalid_argument_error("spatial_mean_backward: need rank-2 grad, got " +
                                 grad_out.shape_str());
  const int b = grad_out.extent(0), k = grad_out.extent(1);
  const size_t plane = size_t(height) * width;
  Tensor dx({b, k, height, width});
  for (int n = 0; n < b; ++n)
    for (int c = 0; c < k; ++c) {
      const float g = grad_out.at(n, c) / float(plane);
      float* d = dx.data() + (size_t(n) * k + c) * plane;
      for (size_t i = 0; i < plane; ++i) d[i] = g;
    }
  return dx;
}

// -------------------------------------------------------------- softmax

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2)
    throw invalid_argument_error("softmax: need rank-2 logits, got " + logits.shape_str());
  const int b = logits.extent(0), k = logits.extent(1);
  Tensor probs(logits.shape());
  for (int n = 0; n < b; ++n) {
    const float* l = logits.data() + size_t(n) * k;
    float* p = probs.data() + size_t(n) * k;
    float mx = l[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, l[j]);
    double sum = 0;
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp(l[j] - mx);
      sum += p[j];
    }
    const float inv = float(1.0 / sum);
    for (int j = 0; j < k; ++j) p[j] *= inv;
  }
  return probs;
}

XentOut softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  const int b = logits.extent(0), k = logits.extent(1);
  if (int(labels.size()) != b)
    throw invalid_argument_error("softmax_xent: " + std::to_string(labels.size()) +
                                 " labels for batch " + logits.shape_str());
  for (int n = 0; n < b; ++n)
    if (labels[size_t(n)] < 0 || labels[size_t(n)] >= k)
      throw invalid_argument_error("softmax_xent: label " + std::to_string(labels[size_t(n)]) +
                                   " out of range [0," + std::to_string(k) + ")");
  XentOut r;
  r.probs = softmax_rows(logits);
  r.grad = Tensor(logits.shape());
  double loss = 0;
  for (int n = 0; n < b; ++n) {
    const float* p = r.probs.data() + size_t(n) * k;
    float* g = r.grad.data() + size_t(n) * k;
    loss -= std::log(std::max(double(p[labels[size_t(n)]]), 1e-30));
    for (int j = 0; j < k; ++j)
      g[j] = (p[j] - (j == labels[size_t(n)] ? 1.f : 0.f)) / float(b);
  }
  r.loss = float(loss / b);
  return r;
}

}  // namespace sononet
