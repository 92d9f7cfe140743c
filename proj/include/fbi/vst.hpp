#pragma once

#include "fbi/noise.hpp"
#include "fbi/ops.hpp"

namespace fbi {

/// Per-image min/offset recorded by normalize(); the normalized image has
/// noise variance approximately beta^-2.
struct NormalizationInfo {
  Scalar m;
  Scalar beta;
};

/// Variance-stabilizing transform G = (2/alpha) * sqrt(alpha*Y + (3/8)*alpha^2
/// + sigma^2).  The radicand is clamped at 0 (zero subgradient there) since
/// clipped noisy pixels can push it slightly negative.  Differentiable in all
/// three arguments; alpha and sigma are scalar tensors.
Tensor gat(const Tensor& Y, const Tensor& alpha, const Tensor& sigma);
Tensor gat(const Tensor& Y, const NoiseParams& p);

struct Normalized {
  Tensor z;
  NormalizationInfo info;
};

/// Z = (G - min) / (max - min); errors on constant images.  Differentiable
/// through the min/max reductions.
Normalized normalize(const Tensor& G);

/// Exact inverse: D = Zhat * beta + m.
Tensor denormalize(const Tensor& zhat, const NormalizationInfo& info);

/// Closed-form approximately-unbiased inverse of the stabilizing transform.
/// Entries with D > 0.1 use the full series; smaller entries fall back to the
/// plain algebraic inverse.  MeanPreserving rescales by alpha (the series
/// estimates the Poisson mean, which is x/alpha there).  `clip` maps the
/// result into [0,1]; raw access (clip=false) serves unbiasedness checks on
/// unnormalized intensities.
Tensor iat(const Tensor& D, const NoiseParams& p, SynthesisMode mode, bool clip = true);

}  // namespace fbi
