#include "fbi/optim.hpp"

#include <cmath>

namespace fbi {

Adam::Adam(std::vector<Parameter> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = ArrayX::Zero(params_[i].tensor.numel());
    v_[i] = ArrayX::Zero(params_[i].tensor.numel());
  }
}

void Adam::step() {
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Scalar>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const ArrayX& g = p.grad();
    if (!g.allFinite()) throw NumericError("adam: non-finite gradient for " + params_[i].name);
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.square();
    ArrayX update = cfg_.lr * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + cfg_.eps);
    if (!update.allFinite()) throw NumericError("adam: non-finite update for " + params_[i].name);
    p.mutable_array() -= update;
    p.zero_grad();
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace fbi
