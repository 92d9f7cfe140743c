#pragma once

#include "fbi/bsn.hpp"
#include "fbi/pge.hpp"
#include "fbi/vst.hpp"

#include <vector>

namespace fbi {

/// Per-pixel affine coefficients: slope in [0, 0.1], intercept in [0,1].
struct AffineField {
  Tensor a1;
  Tensor a0;
};

/// Map the network's two logit channels into the clamped coefficient ranges:
/// a1 = 0.1 * sigmoid(logit0), a0 = sigmoid(logit1).
AffineField affine_field(const Tensor& logits);

/// f = a1 * Z + a0 elementwise.
Tensor affine_apply(const Tensor& z, const AffineField& field);

/// Unbiased MSE estimate for an affine denoiser with context-only
/// coefficients: mean((Z-f)^2) + sigma2 * mean(2*a1 - 1).
Tensor estimated_loss(const Tensor& z, const Tensor& f, const Tensor& a1, Scalar sigma2);

struct LossItem {
  Tensor z;
  Tensor f;
  Tensor a1;
  Scalar beta;  // normalization scale; noise variance is beta^-2
};

/// Mean over images of estimated_loss with per-image sigma2 = beta^-2.
Tensor dataset_loss(const std::vector<LossItem>& items);

struct TrainDenoiserConfig {
  Index epochs = 40;
  Index batch = 4;
  Index patch = 64;
  Scalar lr = 1e-3;
  std::uint64_t seed = 1;
};

struct DenoiserHistory {
  std::vector<Scalar> epoch_loss;
};

/// Phase 2: transform every image with its noise parameters (GAT + per-image
/// normalization), then fit the blind-spot coefficients by minimizing the
/// unbiased loss on random patches.
DenoiserHistory train_denoiser(const std::vector<Tensor>& noisy2d,
                               const std::vector<NoiseParams>& params, BsnNet& net,
                               const TrainDenoiserConfig& cfg);

/// Same, with parameters estimated once per image by a trained PgeNet.
DenoiserHistory train_denoiser(const std::vector<Tensor>& noisy2d, const PgeNet& pge, BsnNet& net,
                               const TrainDenoiserConfig& cfg);

/// Ablation upper bound: identical loop, but the loss is plain mse between
/// the affine output and the clean image mapped through the same transform
/// and per-image normalization as its noisy counterpart.  Needs cleans, so it
/// is for comparison only, never part of the blind pipeline.
DenoiserHistory train_denoiser_supervised(const std::vector<Tensor>& noisy2d,
                                          const std::vector<Tensor>& clean2d,
                                          const std::vector<NoiseParams>& params, BsnNet& net,
                                          const TrainDenoiserConfig& cfg);

/// Full inference: gat -> normalize -> blind-spot affine -> denormalize ->
/// inverse transform, clipped to [0,1].
Tensor denoise(const Tensor& y2d, const NoiseParams& p, const BsnNet& net, SynthesisMode mode);
Tensor denoise(const Tensor& y2d, const PgeNet& pge, const BsnNet& net, SynthesisMode mode);

}  // namespace fbi
