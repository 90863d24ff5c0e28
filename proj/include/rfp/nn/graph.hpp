#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rfp/tensor.hpp"

namespace rfp::nn {

using rfp::Tensord;

/// One value in a differentiable computation. Leaves (parameters, inputs)
/// live outside any tape and keep their gradient across tapes until zeroed;
/// interior nodes are recorded on a Tape in creation order, which is a valid
/// topological order for the reverse sweep.
struct Node {
  Tensord value;
  Tensord grad;  // lazily allocated on first accumulation
  bool requires_grad = false;
  bool leaf = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad = Tensord(value.shape());
  }
  bool has_grad() const { return !grad.empty(); }
  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
  }
};

using Var = std::shared_ptr<Node>;

inline Var make_leaf(Tensord value, bool requires_grad = true) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->leaf = true;
  return n;
}

/// Accumulates g into the node's gradient, allocating on demand. No-op for
/// nodes that do not require gradients.
void accumulate_grad(Node& node, const Tensord& g);

class Tape {
 public:
  Var record(Tensord value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

  /// Reverse sweep from a scalar output. Throws UsageError if the output is
  /// not a single element or was not produced by this tape.
  void backward(const Var& output);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Var> nodes_;
};

}  // namespace rfp::nn
