#pragma once

#include "fbi/rng.hpp"
#include "fbi/tensor.hpp"

#include <vector>

namespace fbi {

inline constexpr Scalar kAlphaFloor = 1e-6;

/// Poisson-Gaussian noise parameters: Y = alpha * P + N with P Poisson in the
/// clean intensity and N ~ N(0, sigma^2).
struct NoiseParams {
  Scalar alpha;
  Scalar sigma;

  NoiseParams(Scalar a, Scalar s) : alpha(a), sigma(s) {
    if (!(alpha >= kAlphaFloor)) throw Error("NoiseParams: alpha below 1e-6 floor");
    if (!(sigma >= 0)) throw Error("NoiseParams: sigma must be non-negative");
  }
};

/// Literal keeps Y = alpha*Poisson(x) + N, so E[Y] = alpha*x.  MeanPreserving
/// scales the Poisson intensity (Y = alpha*Poisson(x/alpha) + N) so E[Y] = x,
/// which is what the synthetic experiments use by default.
enum class SynthesisMode { Literal, MeanPreserving };

/// Noise variance at clean intensity x: alpha^2*x + sigma^2 (Literal) or
/// alpha*x + sigma^2 (MeanPreserving).
Scalar pg_variance(Scalar x, const NoiseParams& p, SynthesisMode mode);

/// Draw one noisy realization of a clean image in [0,1].  Output is clipped
/// back to [0,1] unless `clip` is false (variance tests need raw samples).
Tensor synthesize(const Tensor& clean, const NoiseParams& p, SynthesisMode mode,
                  std::uint64_t seed, bool clip = true);

struct MixtureRanges {
  Scalar alpha_lo = kAlphaFloor;
  Scalar alpha_hi = 0.0256;  // 0.16^2
  Scalar sigma_lo = 0.0;
  Scalar sigma_hi = 0.06;
};

/// Independent uniform draws of (alpha, sigma) within the ranges.
std::vector<NoiseParams> sample_mixture(const MixtureRanges& ranges, Index count,
                                        std::uint64_t seed);

}  // namespace fbi
