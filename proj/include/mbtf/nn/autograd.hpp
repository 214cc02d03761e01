#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mbtf/nn/tensor.hpp"

namespace mbtf::nn {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  long tape_index = -1;  // -1 for leaves (constants and parameters)
  std::function<void()> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return !grad.empty() || value.empty(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

// Records intermediate nodes in creation order. Reverse-mode gradients run
// the recorded backward closures in exact reverse order, so accumulation
// order is deterministic.
template <typename T>
class Graph {
 public:
  Var<T> constant(Tensor<T> value) { return make_leaf(std::move(value), false); }

  // Output node of an op. When no input requires grad the closure is dropped.
  Var<T> record(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && grad_enabled_;
    n->tape_index = static_cast<long>(nodes_.size());
    nodes_.push_back(n);
    return n;
  }

  void backward(const Var<T>& loss) {
    if (!loss || loss->tape_index < 0 || static_cast<std::size_t>(loss->tape_index) >= nodes_.size() ||
        nodes_[static_cast<std::size_t>(loss->tape_index)] != loss) {
      throw StateError("backward called on a value that was not produced by a recorded forward pass");
    }
    if (loss->value.size() != 1) {
      throw ValidationError("backward expects a scalar loss, got shape " + shape_str(loss->value.shape()));
    }
    if (!loss->requires_grad) throw StateError("loss does not depend on any trainable value");
    loss->ensure_grad()[0] = T(1);
    for (long i = loss->tape_index; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n->requires_grad && n->backward_fn && !n->grad.empty()) n->backward_fn();
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  std::vector<Var<T>> nodes_;
  bool grad_enabled_ = true;
};

template <typename T>
bool any_requires_grad(std::initializer_list<const Var<T>*> vars) {
  for (const Var<T>* v : vars) {
    if (v && *v && (*v)->requires_grad) return true;
  }
  return false;
}

}  // namespace mbtf::nn
