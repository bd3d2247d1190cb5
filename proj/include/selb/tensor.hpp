#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "selb/error.hpp"

namespace selb {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One recorded operation (or leaf) in the define-by-run graph. Nodes are
// appended in creation order; `id` is a thread-local counter, so sorting by
// id recovers a topological order (every input precedes its consumers).
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily; empty means "not touched"
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // adds into parents' grads

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
  void add_grad(std::size_t i, double v) {
    ensure_grad();
    grad[i] += v;
  }
};

std::uint64_t next_node_id();
bool grad_enabled();
void set_grad_enabled(bool value);

}  // namespace detail

// Scoped switch that disables graph recording; forward values are unchanged,
// only the bookkeeping is skipped. Used on inference/evaluation paths.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major float64 tensor. Value-semantic handle onto a shared node;
// recorded operations keep their inputs alive through the node's parents.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t ndim() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();
  double item() const;  // value of a single-element tensor

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::TensorNode> node);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse sweep from a single-element root. Visits each reachable recorded
// node exactly once, in reverse creation order, accumulating gradients into
// every requires_grad leaf. Gradients add up across calls; the caller resets
// them (see zero_grad / optim::zero_grad).
void backward(const Tensor& root);

namespace detail {
// Reachable recorded subgraph in topological order (inputs first). Exposed
// so tests can assert the traversal contract directly.
std::vector<std::shared_ptr<TensorNode>> collect_graph(const Tensor& root);
}  // namespace detail

}  // namespace selb
