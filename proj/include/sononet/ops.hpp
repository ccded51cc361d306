#pragma once

#include <cstdint>
#include <vector>

#include "sononet/tensor.hpp"

namespace sononet {

enum class Padding { Same, Valid };

// Guided differs from PlainGradient only at ReLU units: the error is gated by
// the sign of the incoming error as well as the sign of the stored input.
enum class BackwardMode { PlainGradient, Guided };

enum class PhaseMode { Train, Infer };

// ---------------------------------------------------------------------------
// conv2d: cross-correlation with zero padding. SamePad zero-pads floor(k/2)
// on each side; with stride 1 and odd k the spatial extents are preserved.
// input [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias per output channel.

std::vector<int> conv2d_out_shape(const std::vector<int>& input_shape,
                                  const std::vector<int>& kernel_shape, int stride, Padding pad);

Tensor conv2d(const Tensor& input, const Tensor& kernel, const std::vector<float>& bias,
              int stride, Padding pad);

struct Conv2dGrads {
  Tensor input;
  Tensor kernel;
  std::vector<float> bias;
};

// Exact analytic gradients w.r.t. input, kernel and bias.
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, int stride, Padding pad,
                            const Tensor& grad_out);

// Input gradient only (saliency path does not need parameter gradients).
Tensor conv2d_backward_input(const Tensor& kernel, int stride, Padding pad,
                             const Tensor& grad_out, const std::vector<int>& input_shape);

// ---------------------------------------------------------------------------
// 2x2/2 max pooling. Requires even spatial extents; records the argmax so
// backward routes each error only to the winning position.

struct MaxPoolOut {
  Tensor output;
  std::vector<int32_t> argmax;  // flat index into the input per output cell
};

MaxPoolOut maxpool2(const Tensor& input);
Tensor maxpool2_backward(const MaxPoolOut& fwd, const std::vector<int>& input_shape,
                         const Tensor& grad_out);
Tensor maxpool2_backward(const std::vector<int32_t>& argmax, const std::vector<int>& input_shape,
                         const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Batch normalisation over (B,H,W) per channel.

struct BatchNormParams {
  std::vector<float> gamma, beta;
  std::vector<float> running_mean, running_var;

  static BatchNormParams identity(int channels);
  bool empty() const { return gamma.empty(); }
};

struct BatchNormCache {
  PhaseMode mode = PhaseMode::Infer;
  Tensor x_hat;                 // Train: normalised input
  std::vector<float> inv_std;   // Train: per-channel 1/sqrt(var+eps)
  std::vector<float> scale;     // Infer: per-channel gamma/sqrt(running_var+eps)
};

constexpr float kBatchNormEps = 1e-5f;
constexpr float kBatchNormMomentum = 0.1f;

// Train mode normalises with batch statistics and updates the running stats
// by exponential moving average; Infer mode uses the frozen running stats.
Tensor batchnorm(const Tensor& input, BatchNormParams& params, PhaseMode mode,
                 BatchNormCache* cache = nullptr, float eps = kBatchNormEps,
                 float momentum = kBatchNormMomentum);

struct BatchNormGrads {
  Tensor input;
  std::vector<float> gamma, beta;
};

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const std::vector<float>& gamma,
                                  const Tensor& grad_out);

// Frozen-stats backward: per-channel rescale of the incoming error.
Tensor batchnorm_backward_infer(const BatchNormCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// ReLU. Backward takes the stored forward input; PlainGradient applies
// d*step(x), Guided applies d*step(x)*step(d).

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& stored_input, const Tensor& grad_out, BackwardMode mode);

// ---------------------------------------------------------------------------
// Mean over all spatial positions: [B,K,H,W] -> [B,K]. Backward spreads
// 1/(H*W) of the incoming error to every position.

Tensor spatial_mean(const Tensor& input);
Tensor spatial_mean_backward(const Tensor& grad_out, int height, int width);

// ---------------------------------------------------------------------------
// Numerically stable softmax + mean cross-entropy over the batch.

Tensor softmax_rows(const Tensor& logits);  // [B,K] -> [B,K]

struct XentOut {
  float loss = 0.f;
  Tensor grad;   // (softmax - onehot)/B
  Tensor probs;  // row softmax
};

XentOut softmax_xent(const Tensor& logits, const std::vector<int>& labels);

}  // namespace sononet
