#include "fbi/vst.hpp"

#include <cmath>

namespace fbi {

Tensor gat(const Tensor& Y, const Tensor& alpha, const Tensor& sigma) {
  if (!alpha.is_scalar() || !sigma.is_scalar()) throw ShapeError("gat: params must be scalar");
  if (!(alpha.value() >= kAlphaFloor)) throw Error("gat: alpha below 1e-6 floor");
  Tensor radicand = alpha * Y + 0.375 * square(alpha) + square(sigma);
  // A non-positive radicand contributes zero, with zero gradient.  The
  // masked branch swaps it for 1 so sqrt never differentiates at 0, then the
  // mask zeroes the value and blocks the gradient.
  ArrayX mask = (radicand.array() > 0.0).cast<Scalar>();
  Tensor safe = select_mask(mask, radicand, Tensor::full(radicand.shape(), 1.0));
  return select_mask(mask, (2.0 / alpha) * sqrt(safe), Tensor::zeros(radicand.shape()));
}

Tensor gat(const Tensor& Y, const NoiseParams& p) {
  return gat(Y, Tensor::scalar(p.alpha), Tensor::scalar(p.sigma));
}

Normalized normalize(const Tensor& G) {
  Tensor m = reduce_min(G);
  Tensor beta = reduce_max(G) - m;
  if (beta.value() == 0.0) throw Error("normalize: constant image (beta = 0)");
  Tensor z = (G - m) / beta;
  return {z, {m.value(), beta.value()}};
}

Tensor denormalize(const Tensor& zhat, const NormalizationInfo& info) {
  return zhat * info.beta + info.m;
}

Tensor iat(const Tensor& D, const NoiseParams& p, SynthesisMode mode, bool clip) {
  static const Scalar c1 = 0.25 * std::sqrt(1.5);
  static const Scalar c3 = 0.625 * std::sqrt(1.5);
  const Scalar sa = (p.sigma * p.sigma) / (p.alpha * p.alpha);

  // The series estimates the mean of the underlying Poisson variable; entries
  // at or below the guard get the clamped algebraic inverse instead.  Both
  // branches are evaluated everywhere, so guard-failing entries are swapped
  // to a safe value first to keep the negative powers finite.
  ArrayX mask = (D.array() > 0.1).cast<Scalar>();
  Tensor dsafe = select_mask(mask, D, Tensor::full(D.shape(), 1.0));
  Tensor full = square(dsafe) * 0.25 + c1 * reciprocal(dsafe) -
                1.375 * reciprocal(square(dsafe)) +
                c3 * reciprocal(mul(dsafe, square(dsafe))) - 0.125 - sa;
  Tensor algebraic = clamp_min(square(D) * 0.25 - 0.375 - sa, 0.0);
  Tensor out = select_mask(mask, full, algebraic);
  if (mode == SynthesisMode::MeanPreserving) out = out * p.alpha;
  return clip ? clamp(out, 0.0, 1.0) : out;
}

}  // namespace fbi
