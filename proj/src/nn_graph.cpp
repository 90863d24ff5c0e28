#include "rfp/nn/graph.hpp"

#include <algorithm>

#include "rfp/errors.hpp"

namespace rfp::nn {

void accumulate_grad(Node& node, const Tensord& g) {
  if (!node.requires_grad) return;
  if (!g.same_shape(node.value))
    throw ShapeError("gradient shape " + const_cast<Tensord&>(g).shape_str() +
                     " does not match value shape");
  node.ensure_grad();
  node.grad.as_vector() += g.as_vector();
}

Var Tape::record(Tensord value, std::vector<Var> parents,
                 std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->requires_grad =
      std::any_of(n->parents.begin(), n->parents.end(), [](const Var& p) { return p->requires_grad; });
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  nodes_.push_back(n);
  return n;
}

void Tape::backward(const Var& output) {
  if (!output || output->value.size() != 1)
    throw UsageError("backward requires a scalar output node");
  if (nodes_.empty() || output->leaf)
    throw UsageError("backward output must be recorded on this tape");
  output->ensure_grad();
  output->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.requires_grad && n.has_grad() && n.backward_fn) n.backward_fn(n);
  }
}

}  // namespace rfp::nn
