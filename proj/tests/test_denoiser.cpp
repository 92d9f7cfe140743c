#include <doctest.h>

#include <cmath>
#include <vector>

#include "fbi/denoiser.hpp"
#include "fbi/pge.hpp"
#include "fbi/rng.hpp"
#include "fbi/synthetic.hpp"
#include "op_sweep.hpp"

using namespace fbi;
using namespace fbi::testutil;

namespace {

NetConfig tiny_config() {
  NetConfig cfg;
  cfg.width = 4;
  cfg.head_hidden = 4;
  cfg.layers.push_back({{{0, 1}, {1, 0}, {0, -1}, {-1, 0}}, 1, 4, true});
  cfg.layers.push_back({{{0, 0}, {1, 1}, {-1, -1}}, 4, 4, true});
  return cfg;
}

}  // namespace

TEST_CASE("coefficient fields live in their design ranges") {
  Tensor logits = Tensor::leaf({2, 2, 5, 5}, random_array(100, 7, -30.0, 30.0), false);
  AffineField f = affine_field(logits);
  CHECK(f.a1.shape() == Shape{2, 1, 5, 5});
  CHECK(f.a0.shape() == Shape{2, 1, 5, 5});
  CHECK((f.a1.array() > 0.0).all());
  CHECK((f.a1.array() < 0.1).all());
  CHECK((f.a0.array() > 0.0).all());
  CHECK((f.a0.array() < 1.0).all());

  CHECK_THROWS_AS(affine_field(Tensor::zeros({2, 3, 5, 5})), ShapeError);
  CHECK_THROWS_AS(affine_field(Tensor::zeros({2, 5, 5})), ShapeError);
}

TEST_CASE("affine application is a1*z + a0") {
  Tensor z = Tensor::from_array({1, 1, 1, 2}, ArrayX{{0.5, -1.0}});
  AffineField f{Tensor::from_array({1, 1, 1, 2}, ArrayX{{2.0, 3.0}}),
                Tensor::from_array({1, 1, 1, 2}, ArrayX{{0.25, 0.5}})};
  Tensor out = affine_apply(z, f);
  CHECK(out.array()(0) == doctest::Approx(1.25));
  CHECK(out.array()(1) == doctest::Approx(-2.5));
  CHECK_THROWS_AS(affine_apply(Tensor::zeros({1, 1, 2, 2}), f), ShapeError);
}

TEST_CASE("estimated loss reproduces its closed forms") {
  Tensor z = Tensor::leaf({1, 1, 4, 4}, random_array(16, 31, -1.0, 1.0), false);
  const Scalar sigma2 = 0.09;

  // f = z + c with a1 = 1: the z-dependence cancels and the loss is
  // c^2 + sigma^2.
  const Scalar c = 0.35;
  Tensor shifted = z + c;
  Tensor ones = Tensor::from_array(z.shape(), ArrayX::Ones(16));
  CHECK(estimated_loss(z, shifted, ones, sigma2).value() ==
        doctest::Approx(c * c + sigma2).epsilon(1e-12));

  // f = 0 with a1 = 0: mean(z^2) - sigma^2.
  Tensor zeros = Tensor::zeros(z.shape());
  CHECK(estimated_loss(z, zeros, zeros, sigma2).value() ==
        doctest::Approx(z.array().square().mean() - sigma2).epsilon(1e-12));

  CHECK_THROWS_AS(estimated_loss(z, shifted, ones, -0.01), Error);
  CHECK_THROWS_AS(estimated_loss(z, Tensor::zeros({1, 1, 2, 8}), ones, sigma2), ShapeError);
}

TEST_CASE("estimated loss is an unbiased surrogate for the clean-target mse") {
  // z = x + n with known sigma; f = a1*z + a0.  The loss never sees x yet
  // must match E[(f - x)^2] = ((a1-1)x + a0)^2 + a1^2 sigma^2.
  const Scalar x = 0.4, sigma = 0.3, a1 = 0.6, a0 = 0.2;
  const Index n = 200000;
  CounterRng rng(17, stream::gaussian_noise);
  ArrayX noise = rng.normal_array(n);
  ArrayX zarr = x + sigma * noise;
  ArrayX farr = a1 * zarr + a0;

  Tensor z = Tensor::from_array({n}, zarr);
  Tensor f = Tensor::from_array({n}, farr);
  Tensor a1t = Tensor::from_array({n}, ArrayX::Constant(n, a1));
  Scalar loss = estimated_loss(z, f, a1t, sigma * sigma).value();

  const Scalar truth = ((a1 - 1) * x + a0) * ((a1 - 1) * x + a0) + a1 * a1 * sigma * sigma;
  ArrayX per_elem = (zarr - farr).square() + sigma * sigma * (2 * a1 - 1);
  const Scalar sem = std::sqrt((per_elem - per_elem.mean()).square().sum() / (n - 1) / n);
  CHECK(loss == doctest::Approx(per_elem.mean()).epsilon(1e-12));
  CHECK(std::abs(loss - truth) <= 5 * sem);
}

TEST_CASE("dataset loss is the mean of per-item losses with beta^-2 variance") {
  Tensor z = Tensor::leaf({1, 1, 3, 3}, random_array(9, 41, 0.0, 1.0), false);
  Tensor f = Tensor::leaf({1, 1, 3, 3}, random_array(9, 42, 0.0, 1.0), false);
  Tensor a1 = Tensor::leaf({1, 1, 3, 3}, random_array(9, 43, 0.0, 0.1), false);
  LossItem first{z, f, a1, 2.0};
  LossItem second{f, z, a1, 0.5};
  Scalar expected = 0.5 * (estimated_loss(z, f, a1, 0.25).value() +
                           estimated_loss(f, z, a1, 4.0).value());
  CHECK(dataset_loss({first, second}).value() == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(dataset_loss({}), Error);
  LossItem bad{z, f, a1, 0.0};
  CHECK_THROWS_AS(dataset_loss({bad}), Error);
}

TEST_CASE("gradients flow end to end through the full training expression") {
  GradResult res = pipeline_gradcheck();
  CHECK(res.max_rel_err <= 1e-3);
}

TEST_CASE("short training run descends on a tiny dataset") {
  CounterRng trng(5, stream::texture);
  std::vector<Tensor> noisy;
  std::vector<NoiseParams> params;
  for (int i = 0; i < 2; ++i) {
    Tensor clean = make_texture(48, 48, trng);
    noisy.push_back(synthesize(clean, {0.05, 0.02}, SynthesisMode::MeanPreserving,
                               static_cast<std::uint64_t>(200 + i), false));
    params.push_back({0.05, 0.02});
  }
  BsnNet net(tiny_config(), 55);
  DenoiserHistory hist =
      train_denoiser(noisy, params, net, {.epochs = 3, .batch = 2, .patch = 32, .lr = 1e-3,
                                          .seed = 8});
  REQUIRE(hist.epoch_loss.size() == 3);
  for (Scalar l : hist.epoch_loss) CHECK(std::isfinite(l));

  CHECK_THROWS_AS(train_denoiser({}, std::vector<NoiseParams>{}, net, {}), Error);
  std::vector<Tensor> small = {Tensor::zeros({16, 16})};
  std::vector<NoiseParams> one = {{0.05, 0.02}};
  CHECK_THROWS_AS(train_denoiser(small, one, net, {.patch = 32}), Error);
}

TEST_CASE("plain-mse ablation descends against provided cleans") {
  CounterRng trng(9, stream::texture);
  std::vector<Tensor> clean, noisy;
  std::vector<NoiseParams> params;
  for (int i = 0; i < 2; ++i) {
    clean.push_back(make_texture(48, 48, trng));
    noisy.push_back(synthesize(clean.back(), {0.05, 0.02}, SynthesisMode::MeanPreserving,
                               static_cast<std::uint64_t>(400 + i), false));
    params.push_back({0.05, 0.02});
  }
  BsnNet net(tiny_config(), 66);
  // Full-image "patches" make the epoch loss a pure function of the weights,
  // so the descent check cannot be confounded by crop randomness.
  DenoiserHistory hist = train_denoiser_supervised(
      noisy, clean, params, net, {.epochs = 5, .batch = 2, .patch = 48, .lr = 5e-3, .seed = 21});
  REQUIRE(hist.epoch_loss.size() == 5);
  for (Scalar l : hist.epoch_loss) {
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
  }
  CHECK(hist.epoch_loss.back() < hist.epoch_loss.front());

  std::vector<Tensor> one_clean = {clean[0]};
  CHECK_THROWS_AS(train_denoiser_supervised(noisy, one_clean, params, net,
                                            {.epochs = 1, .batch = 2, .patch = 32}),
                  Error);
  std::vector<Tensor> bad_shape = {clean[0], Tensor::zeros({32, 32})};
  CHECK_THROWS_AS(train_denoiser_supervised(noisy, bad_shape, params, net,
                                            {.epochs = 1, .batch = 2, .patch = 32}),
                  ShapeError);
}

TEST_CASE("denoising returns a clipped image of the input shape") {
  CounterRng trng(6, stream::texture);
  Tensor clean = make_texture(48, 48, trng);
  Tensor y = synthesize(clean, {0.05, 0.02}, SynthesisMode::MeanPreserving, 300, true);
  BsnNet net(tiny_config(), 77);

  Tensor out = denoise(y, NoiseParams{0.05, 0.02}, net, SynthesisMode::MeanPreserving);
  CHECK(out.shape() == Shape{48, 48});
  CHECK((out.array() >= 0.0).all());
  CHECK((out.array() <= 1.0).all());
  CHECK_FALSE(out.tracked());

  PgeNet pge(12);
  Tensor out2 = denoise(y, pge, net, SynthesisMode::MeanPreserving);
  CHECK(out2.shape() == Shape{48, 48});
  CHECK((out2.array() >= 0.0).all());
  CHECK((out2.array() <= 1.0).all());

  CHECK_THROWS_AS(denoise(Tensor::zeros({1, 48, 48}), NoiseParams{0.05, 0.02}, net,
                          SynthesisMode::MeanPreserving),
                  ShapeError);
}
