#include "priorlane/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "priorlane/errors.hpp"

namespace priorlane {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(size_t(shape_numel(s)), 0.0);
  n->shape = std::move(s);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape s, double v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value.assign(size_t(shape_numel(s)), v);
  n->shape = std::move(s);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape s, std::vector<double> data,
                         bool requires_grad) {
  if (int64_t(data.size()) != shape_numel(s))
    throw ShapeError("from_data: " + shape_str(s) + " needs " +
                     std::to_string(shape_numel(s)) + " values, got " +
                     std::to_string(data.size()));
  auto n = std::make_shared<Node>();
  n->shape = std::move(s);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1)
    throw UsageError("item: tensor has " + std::to_string(numel()) +
                     " elements");
  return n_->value[0];
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = n_->shape;
  n->value = n_->value;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw UsageError("backward: loss must be a defined scalar tensor");
  Node* root = loss.raw();
  if (!root->requires_grad) return;

  // Reverse post-order over input edges = every node before its inputs.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node* child = node->inputs[idx++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are recomputed from scratch on every pass; only leaf
  // grads persist, so repeated backward calls accumulate exactly once each.
  for (Node* n : order) {
    n->ensure_grad();
    if (n->backprop) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

}  // namespace priorlane
