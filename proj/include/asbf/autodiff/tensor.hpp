#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace asbf::ad {

/// Row-major dimensions. The empty shape denotes a scalar.
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

/// Lightweight handle to a value recorded on a Tape.
///
/// A Tensor does not own its data; the tape does. Copies are cheap and refer
/// to the same node. A default-constructed Tensor is empty and must not be
/// used in operations.
class Tensor {
 public:
  Tensor() = default;

  Tape& tape() const { return *tape_; }
  int node_id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t size() const;
  std::span<const double> data() const;
  /// Value of a one-element tensor.
  double item() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

using GradientMap = std::map<std::string, std::vector<double>>;

/// Append-only record of primitive applications for reverse-mode
/// differentiation.
///
/// Every node stores its forward value at creation time. Nodes only refer to
/// earlier nodes, so the reverse sweep is a single backward pass over the
/// node array. A tape is not thread-safe; use one tape per thread.
class Tape {
 public:
  /// Backward rule: reads the node's own gradient and accumulates into the
  /// gradients of its inputs via Tape::grad_buffer.
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  Tensor constant(Shape shape, double fill);
  Tensor scalar(double value) { return constant({}, value); }

  /// Registers a named trainable leaf. Names are unique per tape.
  Tensor parameter(const std::string& name, Shape shape,
                   std::span<const double> values);

  /// Records a primitive. `backward` may be empty when no input requires a
  /// gradient; it is dropped in that case anyway.
  Tensor record(const char* kind, Shape shape, std::vector<double> value,
                std::vector<int> inputs, Backward backward);

  /// Reverse sweep from a one-element tensor, seeding its gradient with 1.
  void backward(const Tensor& loss);

  /// Gradient of a node after backward(); zeros for unreached nodes.
  std::vector<double> grad(const Tensor& t) const;

  /// Gradients of every registered parameter with respect to `loss`.
  /// Parameters the loss does not depend on receive all-zero gradients.
  GradientMap gradients(const Tensor& loss);

  const std::map<std::string, int>& parameters() const { return params_; }
  std::size_t node_count() const { return nodes_.size(); }

  // Accessors used by primitive implementations.
  const Shape& shape_of(int id) const { return nodes_[id].shape; }
  const std::vector<double>& value_of(int id) const { return nodes_[id].value; }
  const std::vector<double>& grad_of(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const char* kind_of(int id) const { return nodes_[id].kind; }
  /// Lazily zero-initialized gradient storage, or nullptr when the node does
  /// not require a gradient.
  double* grad_buffer(int id);
  Tensor handle(int id) { return Tensor(this, id); }

 private:
  struct Node {
    const char* kind;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<int> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::map<std::string, int> params_;
};

}  // namespace asbf::ad
