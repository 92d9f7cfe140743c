#pragma once

#include "fbi/types.hpp"

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace fbi {

namespace detail {

struct Node {
  Shape shape;
  ArrayX value;
  ArrayX grad;  // empty until the node receives a gradient
  bool requires_grad = false;
  bool tracked = false;  // true when the node participates in a backward pass
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const ArrayX&)> backfn;  // accumulates into parents given d(loss)/d(self)

  Index numel() const { return value.size(); }
};

void accum_grad(Node& n, const ArrayX& g);

}  // namespace detail

/// Value-semantics handle onto a shared autodiff node.  Copies alias the same
/// storage; the tape is dynamic and lives only as long as the tensors built
/// on it.  All values are doubles stored flat in row-major order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Scalar v);
  static Tensor scalar(Scalar v);
  static Tensor from_array(Shape shape, ArrayX data);
  static Tensor from_data(Shape shape, const std::vector<Scalar>& data);
  /// Leaf that accumulates gradient during backward.
  static Tensor leaf(Shape shape, ArrayX data, bool requires_grad);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }
  Index dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  Index numel() const { return n_->numel(); }
  bool is_scalar() const { return numel() == 1; }

  /// Scalar payload; throws unless numel() == 1.
  Scalar value() const;
  const ArrayX& array() const { return n_->value; }
  /// Direct mutation of a leaf's storage (optimizer updates).  Throws if the
  /// node has recorded parents, since that would silently corrupt the tape.
  ArrayX& mutable_array();

  bool requires_grad() const { return n_->requires_grad; }
  bool tracked() const { return n_->tracked; }
  bool has_grad() const { return n_->grad.size() > 0; }
  const ArrayX& grad() const;
  void zero_grad() { n_->grad.resize(0); }

  /// Same storage snapshot without graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return n_; }

 private:
  std::shared_ptr<detail::Node> n_;
};

/// Named trainable leaf.
struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Reverse-mode sweep from a finite scalar loss.  Topological order is
/// resolved by depth-first search; a cycle in the recorded graph throws.
void backward(const Tensor& loss);

/// Scoped switch that stops new ops from recording the tape (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

namespace detail {

/// Shared op constructor: wires parents, tracking and the backward closure.
/// `backfn` receives d(loss)/d(result) and must add into parent grads via
/// accum_grad (only for tracked parents).
Tensor make_op(const char* op, Shape shape, ArrayX value, std::vector<Tensor> parents,
               std::function<void(const ArrayX&)> backfn);

}  // namespace detail

}  // namespace fbi
