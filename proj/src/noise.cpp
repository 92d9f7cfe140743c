#include "fbi/noise.hpp"

#include <cmath>

namespace fbi {

Scalar pg_variance(Scalar x, const NoiseParams& p, SynthesisMode mode) {
  if (!(x >= 0.0 && x <= 1.0)) throw Error("pg_variance: x must lie in [0,1]");
  Scalar poisson_term = mode == SynthesisMode::Literal ? p.alpha * p.alpha * x : p.alpha * x;
  return poisson_term + p.sigma * p.sigma;
}

Tensor synthesize(const Tensor& clean, const NoiseParams& p, SynthesisMode mode,
                  std::uint64_t seed, bool clip) {
  const ArrayX& x = clean.array();
  if ((x < 0.0).any() || (x > 1.0).any()) throw Error("synthesize: clean image must lie in [0,1]");
  CounterRng poisson_rng(seed, stream::poisson_noise);
  CounterRng gauss_rng(seed, stream::gaussian_noise);
  ArrayX y(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Scalar mean = mode == SynthesisMode::Literal ? x[i] : x[i] / p.alpha;
    Scalar v = p.alpha * static_cast<Scalar>(poisson_rng.poisson(mean)) +
               gauss_rng.normal(0.0, p.sigma);
    y[i] = clip ? std::min(1.0, std::max(0.0, v)) : v;
  }
  return Tensor::from_array(clean.shape(), std::move(y));
}

std::vector<NoiseParams> sample_mixture(const MixtureRanges& r, Index count, std::uint64_t seed) {
  if (!(r.alpha_hi > r.alpha_lo) || !(r.sigma_hi > r.sigma_lo)) {
    throw Error("sample_mixture: degenerate range");
  }
  if (count < 0) throw Error("sample_mixture: negative count");
  CounterRng rng(seed, stream::param_mixture);
  std::vector<NoiseParams> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    Scalar a = std::max(kAlphaFloor, rng.uniform(r.alpha_lo, r.alpha_hi));
    Scalar s = rng.uniform(r.sigma_lo, r.sigma_hi);
    out.emplace_back(a, s);
  }
  return out;
}

}  // namespace fbi
