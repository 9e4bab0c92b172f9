#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vrebert {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor;

// Called once during backward() with the op's output; it reads out.grad()
// and accumulates into the parents' grad buffers.
using BackwardFn = std::function<void(const Tensor& out)>;

// Dense row-major array of doubles with an optional gradient accumulator.
//
// Tensor is a shared handle: copies alias the same storage. Every op that
// consumes a tensor with requires_grad() records its parents and a backward
// closure on the result; backward() walks that graph in reverse topological
// order. Nothing is recorded while a NoGradGuard is alive on the thread.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // In-place access for initializers and optimizers. Mutating a tensor
  // that is already part of a recorded graph invalidates that graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero accumulator on first use.
  std::span<double> grad_accumulator();
  void zero_grad();

  // Seeds d(loss)/d(loss) = 1 and accumulates into every requires_grad
  // ancestor. Calling it twice without zero_grad() adds the gradients.
  void backward() const;

  // Same storage values, no history, requires_grad = false.
  Tensor detach() const;
  Tensor clone() const;

  // Builds an op result. History is recorded only if grad mode is on and
  // at least one parent requires grad.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents, BackwardFn backward);

  const std::vector<Tensor>& parents() const;

  bool same_storage(const Tensor& other) const noexcept {
    return node_ == other.node_;
  }

 private:
  struct Node;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  const Node& node() const;
  Node& node();

  std::shared_ptr<Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

}  // namespace vrebert
