#pragma once

#include "fbi/ops.hpp"
#include "fbi/rng.hpp"

#include <string>
#include <vector>

namespace fbi {

/// Dense convolution layer with bias, He-initialized.
struct DenseConv {
  Parameter w;  // (Cout,Cin,kh,kw)
  Parameter b;  // (Cout)
  Index pad = 0;

  Tensor operator()(const Tensor& x) const {
    return conv2d(x, w.tensor, b.tensor, {.stride = 1, .padding = pad, .dilation = 1});
  }
};

/// Channel-wise learnable rectifier slope, init 0.25.
struct PReluLayer {
  Parameter slope;

  Tensor operator()(const Tensor& x) const { return prelu(x, slope.tensor); }
};

DenseConv make_dense_conv(const std::string& name, Index cin, Index cout, Index k, Index pad,
                          CounterRng& rng, Scalar weight_scale = 1.0);
PReluLayer make_prelu(const std::string& name, Index channels);

void append_params(std::vector<Parameter>& out, const DenseConv& c);
void append_params(std::vector<Parameter>& out, const PReluLayer& p);

}  // namespace fbi
