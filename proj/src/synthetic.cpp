#include "fbi/synthetic.hpp"

#include <cmath>
#include <numbers>

namespace fbi {

Tensor make_texture(Index h, Index w, CounterRng& rng, Scalar lo, Scalar hi) {
  if (h < 2 || w < 2) throw ShapeError("make_texture: image must be at least 2x2");
  if (!(hi > lo)) throw Error("make_texture: need hi > lo");
  constexpr int kWaves = 5;
  Scalar fy[kWaves], fx[kWaves], phase[kWaves], amp[kWaves];
  for (int k = 0; k < kWaves; ++k) {
    fy[k] = rng.uniform(0.5, 3.5);
    fx[k] = rng.uniform(0.5, 3.5);
    phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    amp[k] = 1.0 / (1 + k);
  }
  const Scalar gy = rng.uniform(-0.5, 0.5);
  const Scalar gx = rng.uniform(-0.5, 0.5);

  ArrayX img(h * w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Scalar u = static_cast<Scalar>(y) / static_cast<Scalar>(h);
      const Scalar v = static_cast<Scalar>(x) / static_cast<Scalar>(w);
      Scalar s = gy * u + gx * v;
      for (int k = 0; k < kWaves; ++k) {
        s += amp[k] * std::sin(2.0 * std::numbers::pi * (fy[k] * u + fx[k] * v) + phase[k]);
      }
      img[y * w + x] = s;
    }
  }
  const Scalar mn = img.minCoeff();
  const Scalar mx = img.maxCoeff();
  img = lo + (img - mn) * ((hi - lo) / (mx - mn));
  return Tensor::from_array({h, w}, std::move(img));
}

std::vector<Tensor> make_texture_corpus(Index count, Index h, Index w, std::uint64_t seed,
                                        Scalar lo, Scalar hi) {
  CounterRng rng(seed, stream::texture);
  std::vector<Tensor> corpus;
  corpus.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) corpus.push_back(make_texture(h, w, rng, lo, hi));
  return corpus;
}

}  // namespace fbi
