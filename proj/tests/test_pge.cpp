#include <doctest.h>

#include <cmath>
#include <vector>

#include "fbi/noise.hpp"
#include "fbi/pge.hpp"
#include "fbi/rng.hpp"
#include "fbi/synthetic.hpp"
#include "fbi/vst.hpp"

using namespace fbi;

namespace {

Tensor noisy_patch(Index h, Index w, Scalar alpha, Scalar sigma, std::uint64_t seed) {
  CounterRng rng(seed, stream::texture);
  Tensor clean = make_texture(h, w, rng);
  return synthesize(clean, {alpha, sigma}, SynthesisMode::MeanPreserving, seed, false);
}

}  // namespace

TEST_CASE("estimates stay above their floors for any finite head value") {
  CounterRng rng(3, 50);
  for (int rep = 0; rep < 200; ++rep) {
    ArrayX raw(4);
    for (Index i = 0; i < 4; ++i) raw[i] = -50.0 + 100.0 * rng.uniform();
    Tensor head = Tensor::from_array({2, 2, 1, 1}, raw);
    for (Index j = 0; j < 2; ++j) {
      PgeEstimate est = pge_estimate(head, j);
      CHECK(est.alpha.value() >= kPgeAlphaFloorOut);
      CHECK(est.sigma.value() >= kPgeSigmaFloorOut);
      CHECK(std::isfinite(est.alpha.value()));
      CHECK(std::isfinite(est.sigma.value()));
    }
  }
}

TEST_CASE("estimate mapping is floor plus softplus of the head value") {
  Tensor head = Tensor::from_array({1, 2, 1, 1}, ArrayX{{0.3, -1.7}});
  PgeEstimate est = pge_estimate(head, 0);
  CHECK(est.alpha.value() ==
        doctest::Approx(kPgeAlphaFloorOut + std::log1p(std::exp(0.3))).epsilon(1e-12));
  CHECK(est.sigma.value() ==
        doctest::Approx(kPgeSigmaFloorOut + std::log1p(std::exp(-1.7))).epsilon(1e-12));
}

TEST_CASE("forward shape and divisibility requirements") {
  PgeNet net(7);
  Tensor ok = Tensor::zeros({3, 1, 16, 24});
  Tensor out = net.forward(ok);
  CHECK(out.shape() == Shape{3, 2, 1, 1});

  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 2, 16, 16})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({16, 16})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 1, 18, 16})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 1, 16, 22})), ShapeError);
}

TEST_CASE("fresh net estimates sit near the init targets") {
  // Head bias is chosen so a zero feature map maps to (0.05, 0.01); with
  // random small features the inference should stay the same order of
  // magnitude.
  PgeNet net(11);
  Tensor y = noisy_patch(32, 32, 0.05, 0.02, 21);
  NoiseParams p = pge_forward(y, net);
  CHECK(p.alpha > 1e-4);
  CHECK(p.alpha < 1.0);
  CHECK(p.sigma > 1e-6);
  CHECK(p.sigma < 1.0);
}

TEST_CASE("seeded construction and inference are deterministic") {
  PgeNet a(42), b(42), c(43);
  Tensor y = noisy_patch(16, 16, 0.1, 0.01, 5);
  NoiseParams pa = pge_forward(y, a);
  NoiseParams pb = pge_forward(y, b);
  NoiseParams pc = pge_forward(y, c);
  CHECK(pa.alpha == pb.alpha);
  CHECK(pa.sigma == pb.sigma);
  CHECK(pa.alpha != pc.alpha);

  auto pars_a = a.parameters();
  auto pars_b = b.parameters();
  REQUIRE(pars_a.size() == pars_b.size());
  for (std::size_t i = 0; i < pars_a.size(); ++i) {
    CHECK(pars_a[i].name == pars_b[i].name);
    CHECK((pars_a[i].tensor.array() == pars_b[i].tensor.array()).all());
  }
}

TEST_CASE("batch loss matches the per-image computation and ignores order") {
  PgeNet net(9);
  std::vector<Tensor> batch;
  for (std::uint64_t s = 0; s < 3; ++s) batch.push_back(noisy_patch(32, 32, 0.08, 0.015, 60 + s));

  Tensor loss = pge_loss(batch, net);
  CHECK(std::isfinite(loss.value()));
  CHECK(loss.value() >= 0.0);

  Scalar manual = 0;
  for (const Tensor& y : batch) {
    NoiseParams p = pge_forward(y, net);
    Scalar e = eta(gat(y, p)).value();
    manual += (e - 1.0) * (e - 1.0);
  }
  CHECK(loss.value() == doctest::Approx(manual).epsilon(1e-9));

  std::vector<Tensor> reversed(batch.rbegin(), batch.rend());
  CHECK(pge_loss(reversed, net).value() == doctest::Approx(loss.value()).epsilon(1e-12));
}

TEST_CASE("batch loss validates its inputs") {
  PgeNet net(2);
  CHECK_THROWS_AS(pge_loss({}, net), Error);
  std::vector<Tensor> mixed = {noisy_patch(16, 16, 0.1, 0.01, 1),
                               noisy_patch(32, 32, 0.1, 0.01, 2)};
  CHECK_THROWS_AS(pge_loss(mixed, net), ShapeError);
}

TEST_CASE("floor-hit counter reacts to head values near the alpha floor") {
  PgeNet net(4);
  std::vector<Tensor> batch = {noisy_patch(32, 32, 0.1, 0.02, 70)};
  Index hits = 0;
  pge_loss(batch, net, {}, &hits);
  CHECK(hits >= 0);
  CHECK(hits <= 1);
}

TEST_CASE("short training run keeps the loss finite and fills the history") {
  std::vector<Tensor> patches;
  for (std::uint64_t s = 0; s < 8; ++s) patches.push_back(noisy_patch(32, 32, 0.1, 0.02, 80 + s));
  PgeNet net(13);
  TrainHistory hist = train_pge(patches, net, {.epochs = 2, .batch = 4, .lr = 1e-4, .seed = 3});
  REQUIRE(hist.epoch_loss.size() == 2);
  for (Scalar l : hist.epoch_loss) {
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
  }
  CHECK(hist.floor_warnings >= 0);
  // Training must leave the net usable for inference.
  NoiseParams p = pge_forward(patches[0], net);
  CHECK(std::isfinite(p.alpha));
  CHECK(std::isfinite(p.sigma));
}

TEST_CASE("training rejects an empty dataset") {
  PgeNet net(1);
  CHECK_THROWS_AS(train_pge({}, net, {}), Error);
}

TEST_CASE("supervised ablation loss is the parameter-space squared error") {
  std::vector<Tensor> batch;
  for (std::uint64_t s = 0; s < 3; ++s) batch.push_back(noisy_patch(16, 16, 0.08, 0.01, 200 + s));
  PgeNet net(23);
  const NoiseParams truth(0.08, 0.01);
  Tensor loss = pge_supervised_loss(batch, net, truth);
  Scalar manual = 0;
  for (const Tensor& y : batch) {
    NoiseParams p = pge_forward(y, net);
    manual += (p.alpha - truth.alpha) * (p.alpha - truth.alpha) +
              (p.sigma - truth.sigma) * (p.sigma - truth.sigma);
  }
  CHECK(loss.value() == doctest::Approx(manual).epsilon(1e-12));
  CHECK_THROWS_AS(pge_supervised_loss({}, net, truth), Error);
}

TEST_CASE("supervised ablation pulls the estimates toward the target") {
  std::vector<Tensor> patches;
  for (std::uint64_t s = 0; s < 8; ++s) patches.push_back(noisy_patch(32, 32, 0.1, 0.02, 240 + s));
  PgeNet net(7);
  auto mean_alpha_err = [&] {
    Scalar sum = 0;
    for (const Tensor& y : patches) sum += std::abs(pge_forward(y, net).alpha - 0.1);
    return sum / static_cast<Scalar>(patches.size());
  };
  const Scalar before = mean_alpha_err();
  TrainHistory hist = train_pge(patches, net,
                                {.epochs = 10,
                                 .batch = 4,
                                 .lr = 1e-3,
                                 .seed = 3,
                                 .est = {},
                                 .supervised = true,
                                 .truth = {0.1, 0.02}});
  REQUIRE(hist.epoch_loss.size() == 10);
  CHECK(hist.epoch_loss.back() < hist.epoch_loss.front());
  CHECK(mean_alpha_err() < before);
}

TEST_CASE("stabilization locus keeps only grid points within tolerance") {
  Tensor y = noisy_patch(64, 64, 0.05, 0.01, 99);
  std::vector<Scalar> alphas = {0.005, 0.05, 0.5};
  std::vector<Scalar> sigmas = {0.001, 0.01, 0.1};
  Locus loose = stabilization_locus(y, alphas, sigmas, 10.0);
  CHECK(loose.points.size() == 9);
  CHECK(loose.tol == 10.0);

  Locus tight = stabilization_locus(y, alphas, sigmas, 0.5);
  CHECK(tight.points.size() < loose.points.size());
  for (const LocusPoint& pt : tight.points) {
    CHECK(pt.eta_dev <= 0.5);
    bool a_ok = false, s_ok = false;
    for (Scalar a : alphas) a_ok = a_ok || a == pt.alpha;
    for (Scalar s : sigmas) s_ok = s_ok || s == pt.sigma;
    CHECK(a_ok);
    CHECK(s_ok);
  }

  CHECK_THROWS_AS(stabilization_locus(y, {}, sigmas, 0.5), Error);
  CHECK_THROWS_AS(stabilization_locus(y, alphas, {}, 0.5), Error);
}
