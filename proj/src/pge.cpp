#include "fbi/pge.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "fbi/optim.hpp"

namespace fbi {

namespace {

Scalar softplus_inverse(Scalar y) { return std::log(std::expm1(y)); }

Tensor stack_images(const std::vector<Tensor>& batch2d) {
  const Index H = batch2d[0].dim(0), W = batch2d[0].dim(1);
  const Index B = static_cast<Index>(batch2d.size());
  ArrayX data(B * H * W);
  for (Index j = 0; j < B; ++j) {
    if (batch2d[static_cast<std::size_t>(j)].shape() != batch2d[0].shape()) {
      throw ShapeError("pge: batch images must share one shape");
    }
    data.segment(j * H * W, H * W) = batch2d[static_cast<std::size_t>(j)].array();
  }
  return Tensor::from_array({B, 1, H, W}, std::move(data));
}

}  // namespace

PgeNet::PgeNet(std::uint64_t seed) {
  CounterRng rng(seed, stream::param_init);
  e1a_ = make_dense_conv("pge.e1a", 1, 16, 3, 1, rng);
  e1b_ = make_dense_conv("pge.e1b", 16, 16, 3, 1, rng);
  e2a_ = make_dense_conv("pge.e2a", 16, 32, 3, 1, rng);
  e2b_ = make_dense_conv("pge.e2b", 32, 32, 3, 1, rng);
  e3a_ = make_dense_conv("pge.e3a", 32, 64, 3, 1, rng);
  e3b_ = make_dense_conv("pge.e3b", 64, 64, 3, 1, rng);
  d2a_ = make_dense_conv("pge.d2a", 96, 32, 3, 1, rng);
  d2b_ = make_dense_conv("pge.d2b", 32, 32, 3, 1, rng);
  d1a_ = make_dense_conv("pge.d1a", 48, 16, 3, 1, rng);
  d1b_ = make_dense_conv("pge.d1b", 16, 16, 3, 1, rng);
  head_ = make_dense_conv("pge.head", 16, 2, 1, 0, rng);
  p1a_ = make_prelu("pge.p1a", 16);
  p1b_ = make_prelu("pge.p1b", 16);
  p2a_ = make_prelu("pge.p2a", 32);
  p2b_ = make_prelu("pge.p2b", 32);
  p3a_ = make_prelu("pge.p3a", 64);
  p3b_ = make_prelu("pge.p3b", 64);
  q2a_ = make_prelu("pge.q2a", 32);
  q2b_ = make_prelu("pge.q2b", 32);
  q1a_ = make_prelu("pge.q1a", 16);
  q1b_ = make_prelu("pge.q1b", 16);
  // Head biases put the initial estimates mid-range (alpha ~ 0.05,
  // sigma ~ 0.01) so the stabilizing transform is well-conditioned at step 0.
  ArrayX& hb = head_.b.tensor.mutable_array();
  hb[0] = softplus_inverse(0.05 - kPgeAlphaFloorOut);
  hb[1] = softplus_inverse(0.01 - kPgeSigmaFloorOut);
}

Tensor PgeNet::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != 1) throw ShapeError("pge: input must be (N,1,H,W)");
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw ShapeError("pge: spatial dims must be divisible by 4");
  }
  Tensor s1 = p1b_(e1b_(p1a_(e1a_(x))));
  Tensor s2 = p2b_(e2b_(p2a_(e2a_(avg_pool2d(s1, 2)))));
  Tensor s3 = p3b_(e3b_(p3a_(e3a_(avg_pool2d(s2, 2)))));
  Tensor d2 = q2b_(d2b_(q2a_(d2a_(concat_channels(nearest_upsample2x(s3), s2)))));
  Tensor d1 = q1b_(d1b_(q1a_(d1a_(concat_channels(nearest_upsample2x(d2), s1)))));
  return global_avg_pool(head_(d1));
}

std::vector<Parameter> PgeNet::parameters() const {
  std::vector<Parameter> out;
  for (const DenseConv* c : {&e1a_, &e1b_, &e2a_, &e2b_, &e3a_, &e3b_, &d2a_, &d2b_, &d1a_, &d1b_,
                             &head_}) {
    append_params(out, *c);
  }
  for (const PReluLayer* p :
       {&p1a_, &p1b_, &p2a_, &p2b_, &p3a_, &p3b_, &q2a_, &q2b_, &q1a_, &q1b_}) {
    append_params(out, *p);
  }
  return out;
}

PgeEstimate pge_estimate(const Tensor& head_out, Index sample) {
  Tensor u1 = element(head_out, sample * 2);
  Tensor u2 = element(head_out, sample * 2 + 1);
  return {kPgeAlphaFloorOut + softplus(u1), kPgeSigmaFloorOut + softplus(u2)};
}

NoiseParams pge_forward(const Tensor& y2d, const PgeNet& net) {
  NoGradGuard off;
  if (y2d.ndim() != 2) throw ShapeError("pge_forward: expected 2-d image");
  Tensor x = reshape(y2d, {1, 1, y2d.dim(0), y2d.dim(1)});
  Tensor out = net.forward(x);
  PgeEstimate est = pge_estimate(out, 0);
  return {est.alpha.value(), est.sigma.value()};
}

Tensor pge_loss(const std::vector<Tensor>& batch2d, const PgeNet& net, const EstimatorConfig& est,
                Index* floor_hits) {
  if (batch2d.empty()) throw Error("pge_loss: empty batch");
  Tensor stacked = stack_images(batch2d);
  Tensor out = net.forward(stacked);
  Tensor loss = Tensor::scalar(0.0);
  for (Index j = 0; j < static_cast<Index>(batch2d.size()); ++j) {
    PgeEstimate e = pge_estimate(out, j);
    if (floor_hits && e.alpha.value() < 1.2 * kPgeAlphaFloorOut) ++*floor_hits;
    Tensor g = gat(batch2d[static_cast<std::size_t>(j)], e.alpha, e.sigma);
    loss = loss + square(eta(g, est) - 1.0);
  }
  return loss;
}

Tensor pge_supervised_loss(const std::vector<Tensor>& batch2d, const PgeNet& net,
                           const NoiseParams& truth) {
  if (batch2d.empty()) throw Error("pge_supervised_loss: empty batch");
  Tensor out = net.forward(stack_images(batch2d));
  Tensor loss = Tensor::scalar(0.0);
  for (Index j = 0; j < static_cast<Index>(batch2d.size()); ++j) {
    PgeEstimate e = pge_estimate(out, j);
    loss = loss + square(e.alpha - truth.alpha) + square(e.sigma - truth.sigma);
  }
  return loss;
}

TrainHistory train_pge(const std::vector<Tensor>& patches2d, PgeNet& net,
                       const TrainPgeConfig& cfg) {
  if (patches2d.empty()) throw Error("train_pge: empty dataset");
  Adam opt(net.parameters(), {.lr = cfg.lr});
  CounterRng shuffle_rng(cfg.seed, stream::batch_shuffle);
  std::vector<std::size_t> order(patches2d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }
    Scalar epoch_sum = 0;
    Index floor_hits = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      std::vector<Tensor> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch); ++k) {
        batch.push_back(patches2d[order[k]]);
      }
      Tensor loss;
      try {
        loss = cfg.supervised ? pge_supervised_loss(batch, net, cfg.truth)
                              : pge_loss(batch, net, cfg.est, &floor_hits);
        backward(loss);
        opt.step();
      } catch (const NumericError& e) {
        throw Error("train_pge: diverged at epoch " + std::to_string(epoch) + " (" + e.what() +
                    ")");
      }
      epoch_sum += loss.value();
    }
    if (floor_hits > 0) {
      std::fprintf(stderr, "train_pge: warning: alpha estimate near floor (%lld hits, epoch %lld)\n",
                   static_cast<long long>(floor_hits), static_cast<long long>(epoch));
      history.floor_warnings += floor_hits;
    }
    history.epoch_loss.push_back(epoch_sum / static_cast<Scalar>(patches2d.size()));
  }
  return history;
}

Locus stabilization_locus(const Tensor& patch2d, const std::vector<Scalar>& alpha_grid,
                          const std::vector<Scalar>& sigma_grid, Scalar tol,
                          const EstimatorConfig& est) {
  if (alpha_grid.empty() || sigma_grid.empty()) throw Error("stabilization_locus: empty grid");
  NoGradGuard off;
  Locus locus;
  locus.tol = tol;
  for (Scalar a : alpha_grid) {
    for (Scalar s : sigma_grid) {
      Tensor g = gat(patch2d, NoiseParams(a, s));
      Scalar dev = std::abs(eta(g, est).value() - 1.0);
      if (dev <= tol) locus.points.push_back({a, s, dev});
    }
  }
  return locus;
}

}  // namespace fbi
