#include <doctest.h>

#include <cmath>

#include "fbi/noise.hpp"
#include "fbi/rng.hpp"
#include "fbi/vst.hpp"
#include "gradcheck.hpp"

using namespace fbi;
using namespace fbi::testutil;

TEST_CASE("transform values") {
  auto g = [](double y, double a, double s) {
    return gat(Tensor::scalar(y), NoiseParams(a, s)).value();
  };
  CHECK(g(1.0, 1.0, 0.0) == doctest::Approx(2.345208).epsilon(1e-6));
  CHECK(g(0.0, 2.0, 0.0) == doctest::Approx(1.224745).epsilon(1e-6));
  CHECK(g(0.5, 0.1, 0.02) == doctest::Approx(4.654031).epsilon(1e-5));
}

TEST_CASE("negative radicand clamps to zero with zero gradient") {
  Tensor y = Tensor::leaf({1}, (ArrayX(1) << -10.0).finished(), true);
  Tensor g = gat(y, Tensor::scalar(0.5), Tensor::scalar(0.01));
  CHECK(g.value() == 0.0);
  backward(reduce_sum(g));
  CHECK(y.grad()[0] == 0.0);
}

TEST_CASE("transform gradcheck in all three arguments") {
  Tensor y = Tensor::from_array({8}, random_array(8, 31, 0.05, 0.95));
  Tensor a = Tensor::from_array({1}, (ArrayX(1) << 0.07).finished());
  Tensor s = Tensor::from_array({1}, (ArrayX(1) << 0.04).finished());
  GradResult r = gradcheck_multi(
      [](const std::vector<Tensor>& x) { return reduce_sum(square(gat(x[0], x[1], x[2]))); },
      {y, a, s}, 1e-6);
  CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("alpha floor is enforced") {
  CHECK_THROWS_AS(gat(Tensor::scalar(0.5), Tensor::scalar(1e-9), Tensor::scalar(0.0)), Error);
}

TEST_CASE("normalization maps to [0,1] and inverts") {
  Tensor g = Tensor::from_array({20}, random_array(20, 32, -3, 7));
  Normalized n = normalize(g);
  CHECK(n.z.array().minCoeff() == doctest::Approx(0.0));
  CHECK(n.z.array().maxCoeff() == doctest::Approx(1.0));
  CHECK(n.info.beta > 0);
  ArrayX back = denormalize(n.z, n.info).array();
  CHECK((back - g.array()).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(normalize(Tensor::full({5}, 2.0)), Error);
}

TEST_CASE("unit noise variance maps to beta^-2 after normalization") {
  CounterRng rng(5, 2);
  Tensor g = Tensor::from_array({50000}, 4.0 + rng.normal_array(50000));
  Normalized n = normalize(g);
  double zvar = (n.z.array() - n.z.array().mean()).square().mean();
  CHECK(zvar == doctest::Approx(1.0 / (n.info.beta * n.info.beta)).epsilon(0.02));
}

TEST_CASE("inverse transform values and guard") {
  NoiseParams unit(1.0, 0.0);
  CHECK(iat(Tensor::scalar(2.0), unit, SynthesisMode::Literal, false).value() ==
        doctest::Approx(0.780026).epsilon(1e-6));
  // below the series guard: clamped algebraic inverse
  CHECK(iat(Tensor::scalar(0.05), unit, SynthesisMode::Literal, false).value() == 0.0);
  CHECK(iat(Tensor::scalar(0.0), unit, SynthesisMode::Literal, false).value() == 0.0);
  // clip keeps the unit range
  CHECK(iat(Tensor::scalar(40.0), unit, SynthesisMode::Literal, true).value() == 1.0);
  // mean-preserving scales by alpha
  NoiseParams p(0.1, 0.0);
  double lit = iat(Tensor::scalar(3.0), NoiseParams(1.0, 0.0), SynthesisMode::Literal, false).value();
  double mp = iat(Tensor::scalar(3.0) , p, SynthesisMode::MeanPreserving, false).value();
  CHECK(mp == doctest::Approx(0.1 * lit).epsilon(1e-9));
}

TEST_CASE("inverse is monotone on the transform's range") {
  // The series is asymptotic in D; it is only used on forward-transform
  // outputs, which for these parameters are at least 2*sqrt(0.375 + 0.09).
  NoiseParams p(1.0, 0.3);
  double prev = -1e9;
  for (double d = 1.37; d < 12.0; d += 0.1) {
    double v = iat(Tensor::scalar(d), p, SynthesisMode::Literal, false).value();
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("inverse gradcheck above the guard") {
  Tensor d = Tensor::from_array({8}, random_array(8, 33, 0.5, 9.0));
  GradResult r = gradcheck(
      [](const Tensor& x) {
        return reduce_sum(square(iat(x, NoiseParams(0.5, 0.1), SynthesisMode::Literal, false)));
      },
      d, 1e-6);
  CHECK(r.max_rel_err <= 1e-3);
}

TEST_CASE("stabilized draws have unit variance") {
  // Poisson mean 8 via mean-preserving synthesis at x=0.4, alpha=0.05
  NoiseParams p(0.05, 0.02);
  Tensor clean = Tensor::full({360, 360}, 0.4);
  Tensor y = synthesize(clean, p, SynthesisMode::MeanPreserving, 11, false);
  Tensor g = gat(y, p);
  double var = (g.array() - g.array().mean()).square().mean();
  CHECK(var > 0.9);
  CHECK(var < 1.1);
}

TEST_CASE("inverse of the mean recovers the Poisson intensity") {
  // draws at Poisson mean 20 with sigma 0.3, transform, average, invert
  CounterRng pois(21, stream::poisson_noise), gaus(21, stream::gaussian_noise);
  const Index n = 100000;
  ArrayX y(n);
  for (Index i = 0; i < n; ++i) {
    y[i] = static_cast<Scalar>(pois.poisson(20.0)) + 0.3 * gaus.normal();
  }
  NoiseParams p(1.0, 0.3);
  Tensor mean_g = reduce_mean(gat(Tensor::from_array({n}, std::move(y)), p));
  double rec = iat(mean_g, p, SynthesisMode::Literal, false).value();
  CHECK(std::abs(rec - 20.0) / 20.0 < 0.01);
}
