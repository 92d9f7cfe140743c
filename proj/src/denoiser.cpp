#include "fbi/denoiser.hpp"

#include <numeric>

#include "fbi/optim.hpp"

namespace fbi {

AffineField affine_field(const Tensor& logits) {
  if (logits.ndim() != 4 || logits.dim(1) != 2) {
    throw ShapeError("affine_field: expected (N,2,H,W) logits");
  }
  return {0.1 * sigmoid(slice_channels(logits, 0, 1)), sigmoid(slice_channels(logits, 1, 2))};
}

Tensor affine_apply(const Tensor& z, const AffineField& field) {
  if (z.shape() != field.a1.shape() || z.shape() != field.a0.shape()) {
    throw ShapeError("affine_apply: shape mismatch");
  }
  return field.a1 * z + field.a0;
}

Tensor estimated_loss(const Tensor& z, const Tensor& f, const Tensor& a1, Scalar sigma2) {
  if (sigma2 < 0) throw Error("estimated_loss: negative noise variance");
  if (z.shape() != f.shape() || z.shape() != a1.shape()) {
    throw ShapeError("estimated_loss: shape mismatch");
  }
  return reduce_mean(square(z - f)) + sigma2 * reduce_mean(2.0 * a1 - 1.0);
}

Tensor dataset_loss(const std::vector<LossItem>& items) {
  if (items.empty()) throw Error("dataset_loss: empty batch");
  Tensor total = Tensor::scalar(0.0);
  for (const LossItem& it : items) {
    if (!(it.beta > 0)) throw Error("dataset_loss: missing or non-positive beta");
    total = total + estimated_loss(it.z, it.f, it.a1, 1.0 / (it.beta * it.beta));
  }
  return total / static_cast<Scalar>(items.size());
}

namespace {

struct Prepared {
  ArrayX z;  // transformed, normalized image, row-major H*W
  Index h = 0, w = 0;
  Scalar beta = 0;
  ArrayX target;  // clean image under the same transform (supervised ablation)
};

std::vector<Prepared> prepare_images(const std::vector<Tensor>& noisy2d,
                                     const std::vector<NoiseParams>& params,
                                     const std::vector<Tensor>* clean2d) {
  if (noisy2d.empty()) throw Error("train_denoiser: empty dataset");
  if (noisy2d.size() != params.size()) throw Error("train_denoiser: params/images size mismatch");
  if (clean2d && clean2d->size() != noisy2d.size()) {
    throw Error("train_denoiser: clean/noisy count mismatch");
  }
  NoGradGuard off;
  std::vector<Prepared> out;
  out.reserve(noisy2d.size());
  for (std::size_t i = 0; i < noisy2d.size(); ++i) {
    const Tensor& y = noisy2d[i];
    if (y.ndim() != 2) throw ShapeError("train_denoiser: images must be 2-d");
    Normalized n = normalize(gat(y, params[i]));
    Prepared p{n.z.array(), y.dim(0), y.dim(1), n.info.beta, {}};
    if (clean2d) {
      const Tensor& c = (*clean2d)[i];
      if (c.shape() != y.shape()) throw ShapeError("train_denoiser: clean/noisy shape mismatch");
      p.target = (gat(c, params[i]).array() - n.info.m) / n.info.beta;
    }
    out.push_back(std::move(p));
  }
  return out;
}

DenoiserHistory train_impl(const std::vector<Tensor>& noisy2d,
                           const std::vector<NoiseParams>& params,
                           const std::vector<Tensor>* clean2d, BsnNet& net,
                           const TrainDenoiserConfig& cfg) {
  std::vector<Prepared> images = prepare_images(noisy2d, params, clean2d);
  const Index ps = cfg.patch;
  for (const Prepared& im : images) {
    if (im.h < ps || im.w < ps) throw Error("train_denoiser: image smaller than patch size");
  }

  Adam opt(net.parameters(), {.lr = cfg.lr});
  CounterRng shuffle_rng(cfg.seed, stream::batch_shuffle);
  CounterRng crop_rng(cfg.seed, stream::crop);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  DenoiserHistory history;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }
    Scalar epoch_sum = 0;
    Index batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      const Index B = static_cast<Index>(stop - start);
      ArrayX data(B * ps * ps);
      ArrayX tdata(clean2d ? B * ps * ps : 0);
      std::vector<Scalar> betas;
      for (std::size_t k = start; k < stop; ++k) {
        const Prepared& im = images[order[k]];
        const Index y0 = static_cast<Index>(crop_rng.next_u64() %
                                            static_cast<std::uint64_t>(im.h - ps + 1));
        const Index x0 = static_cast<Index>(crop_rng.next_u64() %
                                            static_cast<std::uint64_t>(im.w - ps + 1));
        for (Index r = 0; r < ps; ++r) {
          const Index row = (static_cast<Index>(k - start) * ps + r) * ps;
          data.segment(row, ps) = im.z.segment((y0 + r) * im.w + x0, ps);
          if (clean2d) tdata.segment(row, ps) = im.target.segment((y0 + r) * im.w + x0, ps);
        }
        betas.push_back(im.beta);
      }
      Tensor zb = Tensor::from_array({B, 1, ps, ps}, std::move(data));
      Tensor loss;
      try {
        Tensor logits = net.forward(zb);
        AffineField field = affine_field(logits);
        Tensor f = affine_apply(zb, field);
        if (clean2d) {
          loss = reduce_mean(square(f - Tensor::from_array({B, 1, ps, ps}, std::move(tdata))));
        } else {
          std::vector<LossItem> items;
          for (Index j = 0; j < B; ++j) {
            items.push_back({select_batch(zb, j), select_batch(f, j),
                             select_batch(field.a1, j), betas[static_cast<std::size_t>(j)]});
          }
          loss = dataset_loss(items);
        }
        backward(loss);
        opt.step();
      } catch (const NumericError& e) {
        throw Error("train_denoiser: diverged at epoch " + std::to_string(epoch) + " (" +
                    e.what() + ")");
      }
      epoch_sum += loss.value();
      ++batches;
    }
    history.epoch_loss.push_back(epoch_sum / static_cast<Scalar>(batches));
  }
  return history;
}

}  // namespace

DenoiserHistory train_denoiser(const std::vector<Tensor>& noisy2d,
                               const std::vector<NoiseParams>& params, BsnNet& net,
                               const TrainDenoiserConfig& cfg) {
  return train_impl(noisy2d, params, nullptr, net, cfg);
}

DenoiserHistory train_denoiser(const std::vector<Tensor>& noisy2d, const PgeNet& pge, BsnNet& net,
                               const TrainDenoiserConfig& cfg) {
  std::vector<NoiseParams> params;
  params.reserve(noisy2d.size());
  for (const Tensor& y : noisy2d) params.push_back(pge_forward(y, pge));
  return train_denoiser(noisy2d, params, net, cfg);
}

DenoiserHistory train_denoiser_supervised(const std::vector<Tensor>& noisy2d,
                                          const std::vector<Tensor>& clean2d,
                                          const std::vector<NoiseParams>& params, BsnNet& net,
                                          const TrainDenoiserConfig& cfg) {
  return train_impl(noisy2d, params, &clean2d, net, cfg);
}

Tensor denoise(const Tensor& y2d, const NoiseParams& p, const BsnNet& net, SynthesisMode mode) {
  NoGradGuard off;
  if (y2d.ndim() != 2) throw ShapeError("denoise: expected 2-d image");
  const Index H = y2d.dim(0), W = y2d.dim(1);
  Normalized n = normalize(gat(y2d, p));
  Tensor z4 = reshape(n.z, {1, 1, H, W});
  AffineField field = affine_field(net.forward(z4));
  Tensor d = denormalize(affine_apply(z4, field), n.info);
  return reshape(iat(d, p, mode, true), {H, W});
}

Tensor denoise(const Tensor& y2d, const PgeNet& pge, const BsnNet& net, SynthesisMode mode) {
  return denoise(y2d, pge_forward(y2d, pge), net, mode);
}

}  // namespace fbi
