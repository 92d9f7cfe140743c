#include "fbi/layers.hpp"

#include <cmath>

namespace fbi {

DenseConv make_dense_conv(const std::string& name, Index cin, Index cout, Index k, Index pad,
                          CounterRng& rng, Scalar weight_scale) {
  const Index fan_in = cin * k * k;
  const Scalar sd = weight_scale * std::sqrt(2.0 / static_cast<Scalar>(fan_in));
  ArrayX w = rng.normal_array(cout * cin * k * k) * sd;
  DenseConv c;
  c.w = {name + ".w", Tensor::leaf({cout, cin, k, k}, std::move(w), true)};
  c.b = {name + ".b", Tensor::leaf({cout}, ArrayX::Zero(cout), true)};
  c.pad = pad;
  return c;
}

PReluLayer make_prelu(const std::string& name, Index channels) {
  return {{name + ".slope", Tensor::leaf({channels}, ArrayX::Constant(channels, 0.25), true)}};
}

void append_params(std::vector<Parameter>& out, const DenseConv& c) {
  out.push_back(c.w);
  out.push_back(c.b);
}

void append_params(std::vector<Parameter>& out, const PReluLayer& p) { out.push_back(p.slope); }

}  // namespace fbi
