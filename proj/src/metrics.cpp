#include "fbi/metrics.hpp"

#include <cmath>

namespace fbi {

Scalar psnr(const Tensor& pred, const Tensor& clean, Scalar peak) {
  if (pred.shape() != clean.shape()) throw ShapeError("psnr: shape mismatch");
  Scalar mse = (pred.array() - clean.array()).square().mean();
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

Scalar ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("ssim: shape mismatch");
  if (a.ndim() != 2) throw ShapeError("ssim: expected 2-d images");
  const Index H = a.dim(0), W = a.dim(1);
  constexpr Index win = 11;
  if (H < win || W < win) throw ShapeError("ssim: image smaller than 11x11 window");

  // Normalized Gaussian window, std 1.5.
  Scalar weight[win][win];
  Scalar wsum = 0;
  for (Index i = 0; i < win; ++i) {
    for (Index j = 0; j < win; ++j) {
      Scalar dy = static_cast<Scalar>(i) - 5.0, dx = static_cast<Scalar>(j) - 5.0;
      weight[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
      wsum += weight[i][j];
    }
  }
  for (Index i = 0; i < win; ++i) {
    for (Index j = 0; j < win; ++j) weight[i][j] /= wsum;
  }

  constexpr Scalar c1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
  constexpr Scalar c2 = 0.03 * 0.03;
  const Scalar* pa = a.array().data();
  const Scalar* pb = b.array().data();
  Scalar total = 0;
  Index windows = 0;
  for (Index y = 0; y + win <= H; ++y) {
    for (Index x = 0; x + win <= W; ++x) {
      Scalar mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (Index i = 0; i < win; ++i) {
        for (Index j = 0; j < win; ++j) {
          Scalar va = pa[(y + i) * W + x + j];
          Scalar vb = pb[(y + i) * W + x + j];
          Scalar w = weight[i][j];
          mx += w * va;
          my += w * vb;
          sxx += w * va * va;
          syy += w * vb * vb;
          sxy += w * va * vb;
        }
      }
      Scalar vx = sxx - mx * mx;
      Scalar vy = syy - my * my;
      Scalar cov = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  }
  return total / static_cast<Scalar>(windows);
}

}  // namespace fbi
