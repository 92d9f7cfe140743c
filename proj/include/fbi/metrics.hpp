#pragma once

#include "fbi/tensor.hpp"

namespace fbi {

/// 10*log10(peak^2 / MSE), capped at 99 dB (identical images included).
Scalar psnr(const Tensor& pred, const Tensor& clean, Scalar peak = 1.0);

/// Mean structural similarity over valid 11x11 windows (Gaussian weights,
/// std 1.5, K1=0.01, K2=0.03, dynamic range 1).  Inputs are 2-d images.
Scalar ssim(const Tensor& a, const Tensor& b);

}  // namespace fbi
