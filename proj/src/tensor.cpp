#include "selb/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace selb {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace detail {

namespace {
thread_local std::uint64_t g_node_counter = 0;
thread_local bool g_grad_enabled = true;
}  // namespace

std::uint64_t next_node_id() { return ++g_node_counter; }
bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool value) { g_grad_enabled = value; }

}  // namespace detail

NoGradGuard::NoGradGuard() {
  previous_ = detail::grad_enabled();
  detail::set_grad_enabled(false);
}

NoGradGuard::~NoGradGuard() { detail::set_grad_enabled(previous_); }

namespace {

std::shared_ptr<detail::TensorNode> make_leaf(Shape shape, std::vector<double> data,
                                              bool requires_grad) {
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  n->id = detail::next_node_id();
  return n;
}

void require_defined(const std::shared_ptr<detail::TensorNode>& n) {
  if (!n) fail(ErrorCode::bad_value, "tensor: use of an empty handle");
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return wrap(make_leaf(shape, std::vector<double>(shape_size(shape), 0.0), requires_grad));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return wrap(make_leaf(shape, std::vector<double>(shape_size(shape), value), requires_grad));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data, bool requires_grad) {
  if (data.size() != shape_size(shape)) {
    fail(ErrorCode::shape_mismatch,
         "tensor: data size " + std::to_string(data.size()) + " does not match shape " +
             shape_str(shape));
  }
  return wrap(make_leaf(shape, std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return wrap(make_leaf(Shape{1}, std::vector<double>{value}, requires_grad));
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorNode> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  require_defined(node_);
  return node_->shape;
}

std::size_t Tensor::size() const {
  require_defined(node_);
  return node_->data.size();
}

std::size_t Tensor::ndim() const {
  require_defined(node_);
  return node_->shape.size();
}

const std::vector<double>& Tensor::data() const {
  require_defined(node_);
  return node_->data;
}

std::vector<double>& Tensor::mutable_data() {
  require_defined(node_);
  return node_->data;
}

double Tensor::item() const {
  require_defined(node_);
  if (node_->data.size() != 1) {
    fail(ErrorCode::shape_mismatch,
         "tensor: item() needs a single element, shape is " + shape_str(node_->shape));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const {
  require_defined(node_);
  return node_->requires_grad;
}

void Tensor::set_requires_grad(bool value) {
  require_defined(node_);
  node_->requires_grad = value;
}

bool Tensor::has_grad() const {
  require_defined(node_);
  return !node_->grad.empty();
}

const std::vector<double>& Tensor::grad() const {
  require_defined(node_);
  if (node_->grad.empty()) {
    fail(ErrorCode::optim, "tensor: gradient requested but never produced");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  require_defined(node_);
  node_->grad.assign(node_->data.size(), 0.0);
}

namespace detail {

std::vector<std::shared_ptr<TensorNode>> collect_graph(const Tensor& root) {
  std::vector<std::shared_ptr<TensorNode>> nodes;
  std::unordered_set<const TensorNode*> seen;
  std::vector<std::shared_ptr<TensorNode>> stack;
  if (root.node()) stack.push_back(root.node());
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    nodes.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p);
  }
  // Creation order is a valid topological order (inputs created first).
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->id < b->id; });
  return nodes;
}

}  // namespace detail

void backward(const Tensor& root) {
  if (!root.defined()) fail(ErrorCode::bad_value, "backward: empty root");
  if (root.size() != 1) {
    fail(ErrorCode::shape_mismatch,
         "backward: root must be a single element, shape is " + shape_str(root.shape()));
  }
  auto order = detail::collect_graph(root);
  root.node()->add_grad(0, 1.0);
  // Reverse creation order: every consumer runs before its inputs.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& n = **it;
    if (n.backprop && !n.grad.empty()) n.backprop(n);
  }
}

}  // namespace selb
