#include <doctest.h>

#include <cmath>

#include "fbi/metrics.hpp"
#include "fbi/ops.hpp"
#include "fbi/rng.hpp"
#include "fbi/synthetic.hpp"

using namespace fbi;

TEST_CASE("identical images hit the psnr cap and unit ssim") {
  CounterRng rng(1, stream::texture);
  Tensor img = make_texture(24, 24, rng);
  CHECK(psnr(img, img) == 99.0);
  CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a constant offset gives the closed-form psnr") {
  Tensor clean = Tensor::zeros({16, 16});
  Tensor pred = clean + 0.1;
  // mse = 0.01, peak 1 -> 10*log10(100) = 20 dB.
  CHECK(psnr(pred, clean) == doctest::Approx(20.0).epsilon(1e-12));
  // Doubling the peak adds 20*log10(2).
  CHECK(psnr(pred, clean, 2.0) == doctest::Approx(20.0 + 20.0 * std::log10(2.0)).epsilon(1e-12));
}

TEST_CASE("psnr is symmetric and capped") {
  CounterRng rng(2, stream::texture);
  Tensor a = make_texture(20, 20, rng);
  Tensor b = make_texture(20, 20, rng);
  CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-12));
  Tensor nearly = a + 1e-9;
  CHECK(psnr(nearly, a) <= 99.0);
  CHECK(psnr(nearly, a) > 98.0);
}

TEST_CASE("metrics validate their inputs") {
  CHECK_THROWS_AS(psnr(Tensor::zeros({4, 4}), Tensor::zeros({4, 5})), ShapeError);
  CHECK_THROWS_AS(ssim(Tensor::zeros({12, 12}), Tensor::zeros({12, 13})), ShapeError);
  CHECK_THROWS_AS(ssim(Tensor::zeros({1, 12, 12}), Tensor::zeros({1, 12, 12})), ShapeError);
  CHECK_THROWS_AS(ssim(Tensor::zeros({10, 12}), Tensor::zeros({10, 12})), ShapeError);
}

TEST_CASE("ssim is symmetric and degrades under independent noise") {
  CounterRng rng(3, stream::texture);
  Tensor a = make_texture(32, 32, rng);
  CounterRng noise(4, stream::gaussian_noise);
  ArrayX perturbed = a.array() + 0.15 * noise.normal_array(32 * 32);
  Tensor b = Tensor::from_array({32, 32}, perturbed);

  Scalar s_ab = ssim(a, b);
  CHECK(s_ab == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(s_ab < 0.95);
  CHECK(s_ab > -1.0);

  // A mild blur of the same image should score far better than noise.
  ArrayX blurred = a.array();
  Tensor c = Tensor::from_array({32, 32}, 0.98 * blurred + 0.01);
  CHECK(ssim(a, c) > s_ab);
}

TEST_CASE("ssim only uses fully covered windows") {
  // 11x11 images have exactly one valid window; the score must match a
  // direct evaluation of the ssim formula on that window.
  Tensor a = Tensor::from_array({11, 11}, ArrayX::LinSpaced(121, 0.0, 1.0));
  Tensor b = Tensor::from_array({11, 11}, ArrayX::LinSpaced(121, 1.0, 0.0));
  Scalar s = ssim(a, b);
  CHECK(std::isfinite(s));
  CHECK(s <= 1.0);
  CHECK(s >= -1.0);
}
