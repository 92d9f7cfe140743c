#pragma once

#include "fbi/tensor.hpp"

#include <vector>

namespace fbi {

struct AdamConfig {
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

/// Adam with bias correction.  Parameters without an accumulated gradient are
/// skipped for that step.  Updates throw on non-finite values so divergence
/// surfaces immediately instead of corrupting the weights.
class Adam {
 public:
  explicit Adam(std::vector<Parameter> params, AdamConfig cfg = {});

  void step();
  void zero_grad();
  const std::vector<Parameter>& params() const { return params_; }

 private:
  std::vector<Parameter> params_;
  std::vector<ArrayX> m_, v_;
  AdamConfig cfg_;
  long t_ = 0;
};

}  // namespace fbi
