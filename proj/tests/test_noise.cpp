#include <doctest.h>

#include <cmath>

#include "fbi/noise.hpp"

using namespace fbi;

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(NoiseParams(0.0, 0.1), Error);       // below the alpha floor
  CHECK_THROWS_AS(NoiseParams(0.1, -0.1), Error);      // negative sigma
  CHECK_NOTHROW(NoiseParams(kAlphaFloor, 0.0));
}

TEST_CASE("variance law in both modes") {
  NoiseParams p(0.2, 0.1);
  CHECK(pg_variance(0.5, p, SynthesisMode::Literal) == doctest::Approx(0.04 * 0.5 + 0.01));
  CHECK(pg_variance(0.5, p, SynthesisMode::MeanPreserving) == doctest::Approx(0.2 * 0.5 + 0.01));
  CHECK_THROWS_AS(pg_variance(1.5, p, SynthesisMode::Literal), Error);
}

TEST_CASE("synthesized moments match the law") {
  const Index side = 400;  // 160k pixels
  Tensor clean = Tensor::full({side, side}, 0.4);
  NoiseParams p(0.05, 0.02);
  for (SynthesisMode mode : {SynthesisMode::Literal, SynthesisMode::MeanPreserving}) {
    Tensor y = synthesize(clean, p, mode, 7, /*clip=*/false);
    const double n = static_cast<double>(y.numel());
    double mean = y.array().mean();
    double var = (y.array() - mean).square().sum() / (n - 1);
    double expect_mean = mode == SynthesisMode::Literal ? 0.05 * 0.4 : 0.4;
    double expect_var = pg_variance(0.4, p, mode);
    // mean within 5 standard errors, variance within 5 relative sds
    CHECK(std::abs(mean - expect_mean) < 5 * std::sqrt(expect_var / n));
    CHECK(std::abs(var - expect_var) < 5 * expect_var * std::sqrt(2.0 / (n - 1)));
  }
}

TEST_CASE("clipping keeps the unit range") {
  Tensor clean = Tensor::full({64, 64}, 0.9);
  Tensor y = synthesize(clean, NoiseParams(0.2, 0.1), SynthesisMode::MeanPreserving, 3, true);
  CHECK(y.array().minCoeff() >= 0.0);
  CHECK(y.array().maxCoeff() <= 1.0);
}

TEST_CASE("synthesis is deterministic in the seed") {
  Tensor clean = Tensor::full({16, 16}, 0.5);
  NoiseParams p(0.1, 0.05);
  ArrayX a = synthesize(clean, p, SynthesisMode::Literal, 5, false).array();
  ArrayX b = synthesize(clean, p, SynthesisMode::Literal, 5, false).array();
  ArrayX c = synthesize(clean, p, SynthesisMode::Literal, 6, false).array();
  CHECK((a - b).abs().maxCoeff() == 0.0);
  CHECK((a - c).abs().maxCoeff() > 0.0);
}

TEST_CASE("synthesis rejects out-of-range clean values") {
  CHECK_THROWS_AS(
      synthesize(Tensor::full({4, 4}, 1.2), NoiseParams(0.1, 0.0), SynthesisMode::Literal, 1),
      Error);
}

TEST_CASE("mixture sampling respects the ranges") {
  MixtureRanges r;
  r.alpha_lo = 0.001;
  r.alpha_hi = 0.02;
  r.sigma_lo = 0.01;
  r.sigma_hi = 0.05;
  auto params = sample_mixture(r, 200, 9);
  for (const NoiseParams& p : params) {
    CHECK(p.alpha >= 0.001);
    CHECK(p.alpha <= 0.02);
    CHECK(p.sigma >= 0.01);
    CHECK(p.sigma <= 0.05);
  }
  MixtureRanges bad;
  bad.alpha_lo = 0.5;
  bad.alpha_hi = 0.1;
  CHECK_THROWS_AS(sample_mixture(bad, 1, 1), Error);
}
