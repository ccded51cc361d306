#pragma once

#include <string>
#include <vector>

#include "sononet/manifest.hpp"
#include "sononet/netdef.hpp"

namespace sononet {

// Training hyperparameters. Defaults follow the reference procedure: warm-up
// then 0.1 with Nesterov momentum 0.9, dividing by 10 on validation plateaus,
// balanced batches of 2 per foreground class + 26 background.
struct TrainConfig {
  float initial_lr = 0.1f;  // use 0.001 for BN-free nets (smallnet)
  float warmup_lr = 0.01f;
  int warmup_iters = 500;
  float momentum = 0.9f;
  float lr_divisor = 10.f;
  int plateau_patience = 3;  // validation evaluations without improvement
  int eval_every = 200;      // iterations between validation evaluations
  int per_class_quota = 2;
  int background_quota = 26;
  int max_lr_drops = 3;  // stop when the next drop would exceed this
  int max_iters = 20000;
  uint64_t seed = 1;

  int batch_size(int num_classes) const {
    return (num_classes - 1) * per_class_quota + background_quota;
  }

  // key=value text round-trip; every field by name.
  void save(const std::string& path) const;
  static TrainConfig load(const std::string& path);
};

// ---------------------------------------------------------------------------
// Balanced batch sampling: exactly per_class_quota records of every foreground
// class plus background_quota background records, uniform with replacement,
// shuffled. The returned values index into the manifest.
std::vector<size_t> sample_batch(const Manifest& manifest, int num_classes, int per_class_quota,
                                 int background_quota, Rng& rng);

// ---------------------------------------------------------------------------
// Augmentation: random square crop with side in [174,224] rescaled to 224x224,
// left-right flip with probability 1/2, rotation by a uniform angle in
// [-25,25] degrees with bilinear resampling and zero fill.

struct AugmentParams {
  int side = 224, y0 = 0, x0 = 0;
  bool flip = false;
  float angle_deg = 0.f;
};

constexpr int kAugmentOut = 224;
constexpr int kAugmentMinSide = 174;
constexpr float kAugmentMaxAngle = 25.f;

AugmentParams draw_augment_params(int height, int width, Rng& rng);
Tensor augment_with_params(const Tensor& image, const AugmentParams& params);
Tensor augment(const Tensor& image, Rng& rng);  // draws params, then applies

// Per-image standardisation: subtract the mean intensity, divide by the pixel
// standard deviation. Applied after augmentation.
void normalize_image(Tensor& image);

// ---------------------------------------------------------------------------
// Nesterov momentum optimiser state.

struct OptimizerState {
  std::vector<LayerGrads> velocity;  // shapes mirror the parameters
  float lr = 0.1f;
  int iteration = 0;
  float best_val_loss = 0.f;
  bool has_best = false;
  int drops = 0;
  int evals_since_improvement = 0;

  static OptimizerState init(const Network& net, float lr);
};

// theta += momentum * velocity (the gradient evaluation point).
void nesterov_lookahead(std::vector<LayerParams>& params,
                        const std::vector<LayerGrads>& velocity, float momentum);
// v <- momentum*v - lr*grad; theta <- theta + v. Gradients must have been
// taken at the lookahead point.
void nesterov_apply(std::vector<LayerParams>& params, std::vector<LayerGrads>& velocity,
                    const std::vector<LayerGrads>& grads, float momentum, float lr);

// One optimisation step on an assembled, augmented, normalised batch.
// Throws numeric_error (with the iteration index) on a non-finite loss.
float train_step(Network& net, const Tensor& batch, const std::vector<int>& labels,
                 OptimizerState& opt, float lr, float momentum);

// Plateau rule: after plateau_patience consecutive validation evaluations
// without improvement, divide lr by lr_divisor and reset the streak. Returns
// true when training should stop (the configured number of drops is spent).
bool lr_schedule_update(OptimizerState& opt, float val_loss, const TrainConfig& config);

// ---------------------------------------------------------------------------

struct TrainLogRow {
  int iter = 0;
  float lr = 0.f;
  float train_loss = 0.f;
  float val_loss = 0.f;  // last known; NaN until the first evaluation
};

struct TrainResult {
  Network net;  // weights achieving the best validation loss
  std::vector<TrainLogRow> log;
  float best_val_loss = 0.f;
  int iterations = 0;
};

// CSV "iter,lr,train_loss,val_loss".
std::string train_log_csv(const std::vector<TrainLogRow>& log);
void save_train_log(const std::vector<TrainLogRow>& log, const std::string& path);

// Full loop: case-level 80/20 train/validation split of the manifest, balanced
// sampling, augmentation, normalisation, Nesterov steps, periodic validation
// and the plateau schedule. Deterministic for a fixed config.seed.
TrainResult train(const NetworkSpec& spec, const Manifest& manifest, const std::string& root,
                  const TrainConfig& config);

}  // namespace sononet
