#pragma once

#include <vector>

#include "fbi/rng.hpp"
#include "fbi/tensor.hpp"
#include "fbi/types.hpp"

namespace fbi {

/// Smooth random texture: a handful of low-frequency sinusoids plus a mild
/// linear gradient, min-max mapped into [lo, hi]. Smoothness matters for the
/// patch-covariance estimator, whose signal cluster must stay low-rank.
Tensor make_texture(Index h, Index w, CounterRng& rng, Scalar lo = 0.25, Scalar hi = 0.85);

std::vector<Tensor> make_texture_corpus(Index count, Index h, Index w, std::uint64_t seed,
                                        Scalar lo = 0.25, Scalar hi = 0.85);

}  // namespace fbi
