#pragma once

// Dense double-precision tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage and graph node.
// Tensors that are not attached to a Tape are plain constants; operations
// whose inputs are all constants produce constants and record nothing.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace iag {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;
class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  Tape* tape = nullptr;
  bool leaf = false;
  std::function<void(const Node&)> backward;  // pushes this->grad into parents
};

/// Gradient buffer of `node`, allocated on first use. Returns nullptr for
/// constants so backward closures can skip them.
std::vector<double>* grad_sink(Node& node);

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }

  std::span<const double> values() const;
  /// Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;

  /// Accumulated gradient; empty when none has been computed.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  Tape* tape() const;

  /// Copy of the values, not attached to any tape.
  Tensor detached() const;
  /// Differentiable copy with another shape of equal size.
  Tensor reshaped(Shape shape) const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend class Tape;
  friend Tensor make_result(Shape, std::vector<double>,
                            const std::vector<const Tensor*>&,
                            std::function<void(const detail::Node&)>);
  friend struct TensorAccess;
};

/// Ordered record of operations. Every recorded node follows its parents,
/// so a reverse sweep is a valid topological traversal.
class Tape {
 public:
  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Attach a leaf so that operations on it are recorded and its gradient
  /// is accumulated. The gradient buffer is reset to zeros.
  void watch(Tensor& leaf);

  /// Reverse sweep from a scalar loss. Populates gradients of every watched
  /// leaf reachable from `loss`, then drops all recorded intermediate nodes.
  void backward(const Tensor& loss);

  std::size_t recorded() const { return nodes_.size(); }

 private:
  void record(std::shared_ptr<detail::Node> node);

  std::vector<std::shared_ptr<detail::Node>> nodes_;
  std::vector<std::shared_ptr<detail::Node>> leaves_;

  friend Tensor make_result(Shape, std::vector<double>,
                            const std::vector<const Tensor*>&,
                            std::function<void(const detail::Node&)>);
};

/// Builds the output of a primitive. When any input is on a tape the result
/// is recorded there with `backward`; inputs on different tapes are rejected.
Tensor make_result(Shape shape, std::vector<double> values,
                   const std::vector<const Tensor*>& inputs,
                   std::function<void(const detail::Node&)> backward);

/// Internal access to the node behind a handle, for primitive implementations.
struct TensorAccess {
  static const std::shared_ptr<detail::Node>& node(const Tensor& t) { return t.node_; }
};

}  // namespace iag
