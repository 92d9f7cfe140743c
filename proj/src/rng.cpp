#include "fbi/rng.hpp"

#include <cmath>

namespace fbi {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) {
  state_ = mix64(mix64(seed + kGolden) ^ mix64(stream * kGolden + 0x632BE59BD9B4E019ull));
}

std::uint64_t CounterRng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

Scalar CounterRng::uniform() {
  return static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53;
}

Scalar CounterRng::uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

Scalar CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  Scalar u1 = 1.0 - uniform();  // (0,1], keeps log finite
  Scalar u2 = uniform();
  Scalar r = std::sqrt(-2.0 * std::log(u1));
  Scalar theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Scalar CounterRng::normal(Scalar mean, Scalar sd) { return mean + sd * normal(); }

std::int64_t CounterRng::poisson(Scalar mean) {
  if (mean < 0) throw Error("poisson: negative mean");
  if (mean == 0) return 0;
  if (mean < 10.0) {
    // Sequential search on the CDF.
    Scalar enlam = std::exp(-mean);
    std::int64_t k = 0;
    Scalar prod = uniform();
    while (prod > enlam) {
      prod *= uniform();
      ++k;
    }
    return k;
  }
  // Hormann's PTRS transformed rejection.
  const Scalar slam = std::sqrt(mean);
  const Scalar loglam = std::log(mean);
  const Scalar b = 0.931 + 2.53 * slam;
  const Scalar a = -0.059 + 0.02483 * b;
  const Scalar invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const Scalar vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    Scalar u = uniform() - 0.5;
    Scalar v = uniform();
    Scalar us = 0.5 - std::abs(u);
    auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= vr) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + static_cast<Scalar>(k) * loglam - std::lgamma(static_cast<Scalar>(k) + 1.0)) {
      return k;
    }
  }
}

ArrayX CounterRng::uniform_array(Index n) {
  ArrayX out(n);
  for (Index i = 0; i < n; ++i) out[i] = uniform();
  return out;
}

ArrayX CounterRng::normal_array(Index n) {
  ArrayX out(n);
  for (Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

}  // namespace fbi
