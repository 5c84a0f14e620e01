#pragma once

// Dense f64 tensor with reverse-mode differentiation. A Tensor is a shared
// handle to a graph node; ops (ops.hpp) build the graph, backward() walks it.
// Values are immutable once created except for grad buffers and in-place
// optimizer updates on leaves.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace priorlane {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on demand, same extent as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;  // accumulates into inputs' grads

  int64_t numel() const { return int64_t(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, double v, bool requires_grad = false);
  static Tensor from_data(Shape s, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return int(n_->shape.size()); }
  int dim(int i) const { return n_->shape[size_t(i)]; }
  int64_t numel() const { return n_->numel(); }

  std::vector<double>& data() { return n_->value; }
  const std::vector<double>& data() const { return n_->value; }
  double item() const;

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rq) { n_->requires_grad = rq; }

  std::vector<double>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const std::vector<double>& grad_ref() const { return n_->grad; }
  bool has_grad() const { return n_->grad.size() == n_->value.size(); }
  void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

  // Copy of the value with no graph attached.
  Tensor detach() const;

  std::shared_ptr<Node> node() const { return n_; }
  Node* raw() const { return n_.get(); }

 private:
  std::shared_ptr<Node> n_;
};

// Reverse-mode accumulation from a scalar loss. Repeated calls accumulate
// into existing grads.
void backward(const Tensor& loss);

}  // namespace priorlane
