#include "iag/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "iag/error.hpp"

namespace iag {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>* grad_sink(Node& node) {
  if (node.tape == nullptr) return nullptr;
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return &node.grad;
}

}  // namespace detail

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) {
  check_shape(shape);
  node_ = std::make_shared<detail::Node>();
  node_->value.assign(shape_size(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (values.size() != shape_size(shape))
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_string(shape));
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

std::span<const double> Tensor::grad() const { return node_->grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
Tape* Tensor::tape() const { return node_->tape; }

Tensor Tensor::detached() const { return Tensor(node_->shape, node_->value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size())
    throw ShapeError("cannot reshape " + shape_string(this->shape()) + " to " + shape_string(shape));
  auto src = node_;
  return make_result(std::move(shape), src->value, {this}, [src](const detail::Node& self) {
    if (auto* g = detail::grad_sink(*src))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tape::~Tape() {
  for (auto& n : nodes_) n->tape = nullptr;
  for (auto& l : leaves_) l->tape = nullptr;
}

void Tape::watch(Tensor& leaf) {
  auto& node = leaf.node_;
  if (node->tape != nullptr && node->tape != this)
    throw InvalidArgument("tensor is already attached to another tape");
  if (node->tape == nullptr) leaves_.push_back(node);
  node->tape = this;
  node->leaf = true;
  node->grad.assign(node->value.size(), 0.0);
}

void Tape::record(std::shared_ptr<detail::Node> node) {
  node->tape = this;
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  const auto& root = loss.node_;
  if (!root || root->tape != this) throw InvalidArgument("loss is not recorded on this tape");
  if (root->value.size() != 1)
    throw ShapeError("backward requires a scalar loss, got shape " + shape_string(root->shape));

  root->grad.assign(1, 0.0);
  root->grad[0] += 1.0;

  if (!root->leaf) {
    auto it = std::find(nodes_.rbegin(), nodes_.rend(), root);
    for (; it != nodes_.rend(); ++it) {
      const auto& n = *it;
      if (n->grad.empty() || !n->backward) continue;
      n->backward(*n);
    }
  }

  for (auto& n : nodes_) {
    n->tape = nullptr;
    n->backward = nullptr;
  }
  nodes_.clear();
}

Tensor make_result(Shape shape, std::vector<double> values,
                   const std::vector<const Tensor*>& inputs,
                   std::function<void(const detail::Node&)> backward) {
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    Tape* t = in->node_->tape;
    if (t == nullptr) continue;
    if (tape != nullptr && tape != t) throw InvalidArgument("operands are recorded on different tapes");
    tape = t;
  }
  Tensor out(std::move(shape), std::move(values));
  if (tape != nullptr) {
    out.node_->backward = std::move(backward);
    tape->record(out.node_);
  }
  return out;
}

}  // namespace iag
