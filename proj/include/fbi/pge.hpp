#pragma once

#include "fbi/layers.hpp"
#include "fbi/noise.hpp"
#include "fbi/var_est.hpp"
#include "fbi/vst.hpp"

#include <vector>

namespace fbi {

inline constexpr Scalar kPgeAlphaFloorOut = 1e-4;
inline constexpr Scalar kPgeSigmaFloorOut = 1e-6;

/// Noise-parameter estimator: 3-scale U-Net (16/32/64 channels, two 3x3
/// convs + PReLU per scale, 2x average-pool down, nearest-neighbor up with
/// skip concatenation), then a 1x1 head to 2 channels and global average
/// pooling.  Estimates map through alpha = 1e-4 + softplus(u1),
/// sigma = 1e-6 + softplus(u2).
class PgeNet {
 public:
  explicit PgeNet(std::uint64_t seed);

  /// (N,1,H,W) -> raw head output (N,2,1,1); H and W divisible by 4.
  Tensor forward(const Tensor& x) const;

  std::vector<Parameter> parameters() const;

 private:
  DenseConv e1a_, e1b_, e2a_, e2b_, e3a_, e3b_, d2a_, d2b_, d1a_, d1b_, head_;
  PReluLayer p1a_, p1b_, p2a_, p2b_, p3a_, p3b_, q2a_, q2b_, q1a_, q1b_;
};

/// Per-sample floored estimates from the raw head output.
struct PgeEstimate {
  Tensor alpha;  // scalar tensors, graph-connected to the net
  Tensor sigma;
};
PgeEstimate pge_estimate(const Tensor& head_out, Index sample);

/// Convenience inference on one 2-d image.
NoiseParams pge_forward(const Tensor& y2d, const PgeNet& net);

/// Sum over the batch of (eta(gat(Y_j; estimates_j)) - 1)^2.  All images
/// share one shape.  `floor_hits`, when given, counts estimates in the
/// vanishing-gradient zone just above the alpha floor (reported by the
/// trainer as a warning).
Tensor pge_loss(const std::vector<Tensor>& batch2d, const PgeNet& net,
                const EstimatorConfig& est = {}, Index* floor_hits = nullptr);

/// Ablation loss: sum over the batch of (alpha_j - truth.alpha)^2 +
/// (sigma_j - truth.sigma)^2.  Needs the true parameters, so it is an upper
/// bound for comparison, not part of the blind pipeline.
Tensor pge_supervised_loss(const std::vector<Tensor>& batch2d, const PgeNet& net,
                           const NoiseParams& truth);

struct TrainPgeConfig {
  Index epochs = 30;
  Index batch = 4;
  Scalar lr = 1e-3;
  std::uint64_t seed = 1;
  EstimatorConfig est = {};
  bool supervised = false;  // ablation: regress on `truth` instead of stabilizing
  NoiseParams truth = {0.05, 0.02};
};

struct TrainHistory {
  std::vector<Scalar> epoch_loss;  // mean per-image loss
  Index floor_warnings = 0;
};

TrainHistory train_pge(const std::vector<Tensor>& patches2d, PgeNet& net,
                       const TrainPgeConfig& cfg);

struct LocusPoint {
  Scalar alpha;
  Scalar sigma;
  Scalar eta_dev;  // |eta - 1| at this grid point
};

/// Grid points where the transformed patch has estimated variance within tol
/// of 1 (the stabilization locus).
struct Locus {
  std::vector<LocusPoint> points;
  Scalar tol = 0;
};

Locus stabilization_locus(const Tensor& patch2d, const std::vector<Scalar>& alpha_grid,
                          const std::vector<Scalar>& sigma_grid, Scalar tol,
                          const EstimatorConfig& est = {});

}  // namespace fbi
