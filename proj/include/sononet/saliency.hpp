#pragma once

#include <string>

#include "sononet/netdef.hpp"

namespace sononet {

enum class SaliencyMethod { Plain, GuidedFull, WeightedGuided };
enum class SignMode { PositiveOnly, NegativeOnly, Both };

// Per-pixel signed influence map at the input image resolution. Dark
// structures typically give negative values, bright ones positive.
struct SaliencyMap {
  Tensor values;  // [H,W]
  SaliencyMethod method = SaliencyMethod::Plain;
  int class_id = 0;
};

// Rectified, sign-selected and blurred saliency; all values >= 0.
struct ConfidenceMap {
  Tensor values;  // [H,W]
  SignMode sign_mode = SignMode::Both;
};

// All saliency entry points take a normalised single-image tensor [1,C,H,W]
// (or [1,H,W] / [H,W], promoted internally) and run with frozen BN statistics.

// Gradient of the pre-softmax class score a_k w.r.t. the input pixels.
SaliencyMap plain_saliency(const Network& net, const Tensor& image, int class_id);

// Same seeding, but every ReLU propagates with the guided rule
// d_(n-1) = d_n * step(x) * step(d_n).
SaliencyMap guided_saliency(const Network& net, const Tensor& image, int class_id);

// Class-score-map-weighted saliency: one backward pass from the class score
// maps seeded with F_k thresholded at zero, so receptive fields of highly
// activated map neurons dominate. Equivalent to summing per-neuron backward
// passes scaled by the thresholded activations (exact under the plain rule,
// which the oracle tests use; production default is the guided rule).
SaliencyMap weighted_saliency(const Network& net, const Tensor& image, int class_id,
                              BackwardMode relu_rule = BackwardMode::Guided);

// Per-neuron reference computation of the weighted saliency: one backward pass
// per class-map cell, scaled by the thresholded activation and summed. For
// small class maps only; used to validate the single-pass form.
SaliencyMap weighted_saliency_per_neuron(const Network& net, const Tensor& image, int class_id,
                                         BackwardMode relu_rule = BackwardMode::Guided);

// Sign selection followed by a normalised 5x5 Gaussian blur (sigma = 1).
ConfidenceMap confidence_map(const SaliencyMap& saliency, SignMode mode);

// The blur kernel itself (normalised to sum 1), exposed for verification.
Tensor gaussian5x5();

// 8-bit PGM export after min-max scaling, for visual inspection.
void export_map_pgm(const Tensor& map2d, const std::string& path);
// Raw little-endian dump: u32 height, u32 width, float32 data. Exact.
void export_map_raw(const Tensor& map2d, const std::string& path);
Tensor import_map_raw(const std::string& path);

}  // namespace sononet
