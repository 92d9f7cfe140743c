#pragma once

#include "fbi/types.hpp"

#include <cstdint>

namespace fbi {

/// Counter-based generator: every (seed, stream) pair is an independent
/// deterministic sequence, so pipeline stages can draw from disjoint streams
/// without coordinating.  Mixing is splitmix64.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  /// Uniform draw in [0, 1) with 53-bit resolution.
  Scalar uniform();
  Scalar uniform(Scalar lo, Scalar hi);

  /// Standard normal via Box-Muller; the second draw of each pair is cached.
  Scalar normal();
  Scalar normal(Scalar mean, Scalar sd);

  /// Poisson draw: sequential inversion for mean < 10, PTRS rejection above.
  std::int64_t poisson(Scalar mean);

  ArrayX uniform_array(Index n);
  ArrayX normal_array(Index n);

 private:
  std::uint64_t state_;
  Scalar spare_ = 0;
  bool has_spare_ = false;
};

/// Stream ids used by the pipeline.  Keeping them distinct makes every stage
/// reproducible in isolation under a single run seed.
namespace stream {
inline constexpr std::uint64_t poisson_noise = 1;
inline constexpr std::uint64_t gaussian_noise = 2;
inline constexpr std::uint64_t param_init = 3;
inline constexpr std::uint64_t batch_shuffle = 4;
inline constexpr std::uint64_t param_mixture = 5;
inline constexpr std::uint64_t texture = 6;
inline constexpr std::uint64_t perturbation = 7;
inline constexpr std::uint64_t crop = 8;
}  // namespace stream

}  // namespace fbi
