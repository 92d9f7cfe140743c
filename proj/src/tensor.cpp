#include "fbi/tensor.hpp"

#include <algorithm>
#include <unordered_map>
#include <utility>

namespace fbi {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

namespace detail {

void accum_grad(Node& n, const ArrayX& g) {
  if (!n.tracked) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Tensor make_op(const char* op, Shape shape, ArrayX value, std::vector<Tensor> parents,
               std::function<void(const ArrayX&)> backfn) {
  if (value.size() != numel_of(shape)) {
    throw ShapeError(std::string(op) + ": value size does not match shape " + shape_str(shape));
  }
  if (!value.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite value in forward result");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool track = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents) {
      if (p.node()->tracked || p.node()->requires_grad) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    n->tracked = true;
    n->parents.reserve(parents.size());
    for (Tensor& p : parents) {
      p.node()->tracked = p.node()->tracked || p.node()->requires_grad;
      n->parents.push_back(p.node());
    }
    n->backfn = std::move(backfn);
  }
  return Tensor(n);
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape) {
  ArrayX v = ArrayX::Zero(numel_of(shape));
  return from_array(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, Scalar x) {
  ArrayX v = ArrayX::Constant(numel_of(shape), x);
  return from_array(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(Scalar x) { return full({1}, x); }

Tensor Tensor::from_array(Shape shape, ArrayX data) {
  if (data.size() != numel_of(shape)) {
    throw ShapeError("from_array: data size does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return Tensor(n);
}

Tensor Tensor::from_data(Shape shape, const std::vector<Scalar>& data) {
  ArrayX v = Eigen::Map<const ArrayX>(data.data(), static_cast<Index>(data.size()));
  return from_array(std::move(shape), std::move(v));
}

Tensor Tensor::leaf(Shape shape, ArrayX data, bool requires_grad) {
  Tensor t = from_array(std::move(shape), std::move(data));
  t.node()->requires_grad = requires_grad;
  return t;
}

Scalar Tensor::value() const {
  if (!is_scalar()) throw ShapeError("value(): tensor is not scalar, shape " + shape_str(shape()));
  return n_->value[0];
}

ArrayX& Tensor::mutable_array() {
  if (!n_->parents.empty()) throw Error("mutable_array(): node has recorded history");
  return n_->value;
}

const ArrayX& Tensor::grad() const {
  if (n_->grad.size() == 0) throw Error("grad(): no gradient accumulated");
  return n_->grad;
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = n_->shape;
  n->value = n_->value;
  return Tensor(n);
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined tensor");
  if (!loss.is_scalar()) throw ShapeError("backward: loss must be scalar");
  if (!loss.array().allFinite()) throw NumericError("backward: loss is not finite");
  if (!loss.node()->tracked) throw Error("backward: loss does not depend on any tracked leaf");

  // Iterative DFS; state 1 = on stack (cycle sentinel), 2 = emitted.
  std::vector<detail::Node*> order;
  std::unordered_map<detail::Node*, int> state;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  state[loss.node().get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (!p->tracked) continue;
      auto it = state.find(p);
      if (it == state.end()) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      } else if (it->second == 1) {
        throw Error("backward: cycle in autodiff graph");
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad = ArrayX::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backfn && n->grad.size() > 0) n->backfn(n->grad);
  }
}

}  // namespace fbi
