#include "vrebert/numerics/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

#include "vrebert/errors.hpp"

namespace vrebert {

namespace {
thread_local bool t_grad_enabled = true;
}

struct Tensor::Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<Tensor> parents;
  BackwardFn backward;
};

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           shape_to_string(shape));
    }
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Tensor::Node& Tensor::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

Tensor::Node& Tensor::node() {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }

std::span<const double> Tensor::data() const { return node().data; }
std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on non-scalar tensor " +
                        shape_to_string(shape()));
  }
  return node().data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const auto& n = node();
  if (n.shape.size() != 2 || row >= n.shape[0] || col >= n.shape[1]) {
    throw DimensionError("at(" + std::to_string(row) + "," +
                         std::to_string(col) + ") on " +
                         shape_to_string(n.shape));
  }
  return n.data[row * n.shape[1] + col];
}

bool Tensor::requires_grad() const { return node().requires_grad; }
void Tensor::set_requires_grad(bool value) { node().requires_grad = value; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const { return node().grad; }

std::span<double> Tensor::grad_accumulator() {
  auto& n = node();
  if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() {
  auto& n = node();
  if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

const std::vector<Tensor>& Tensor::parents() const { return node().parents; }

Tensor Tensor::detach() const {
  return from(shape(), node().data, false);
}

Tensor Tensor::clone() const {
  return from(shape(), node().data, requires_grad());
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::vector<Tensor> parents, BackwardFn backward) {
  Tensor out = from(std::move(shape), std::move(values), false);
  if (!t_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  auto& n = out.node();
  n.requires_grad = true;
  n.parents = std::move(parents);
  n.backward = std::move(backward);
  return out;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        shape_to_string(shape()));
  }
  if (!requires_grad()) {
    throw ContractError("backward() on a tensor with no recorded history");
  }

  // Iterative post-order DFS over nodes that require grad.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [current, next_parent] = stack.back();
    if (next_parent < current->parents.size()) {
      Node* parent = current->parents[next_parent++].node_.get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(current);
      stack.pop_back();
    }
  }

  // Interior buffers restart from zero each pass; leaves accumulate.
  for (Node* n : order) {
    if (!n->parents.empty()) n->grad.assign(n->data.size(), 0.0);
  }
  auto& root = const_cast<Node&>(node());
  if (root.grad.empty()) root.grad.assign(1, 0.0);
  root.grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) {
      // Non-owning handle so the closure can read the output's grad.
      Tensor view(std::shared_ptr<Node>(std::shared_ptr<Node>{}, n));
      n->backward(view);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

}  // namespace vrebert
