#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "subqe/nn/tensor.hpp"

namespace subqe::nn {

/// One value on the tape. `backward` reads this node's grad and accumulates
/// into the grads of `parents`.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor(value.shape);
    return grad;
  }
};

using Var = std::shared_ptr<Node>;

inline Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

/// Leaf that collects gradients.
inline Var parameter(Tensor t) {
  auto n = constant(std::move(t));
  n->requires_grad = true;
  return n;
}

/// Builds an op result. The backward closure is dropped when no parent needs
/// gradients.
inline Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return n;
}

/// Reverse-mode sweep from a scalar (or seeded) root.
inline void backward(const Var& root, const Tensor* seed = nullptr) {
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // iterative post-order DFS
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.contains(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Tensor& g = root->ensure_grad();
  if (seed) {
    expect_shape(*seed, root->value.shape, "backward seed");
    g = *seed;
  } else {
    std::fill(g.data.begin(), g.data.end(), 1.0);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.shape == n->value.shape) n->backward(*n);
  }
}

}  // namespace subqe::nn
