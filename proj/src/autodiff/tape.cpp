#include "asbf/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "asbf/errors.hpp"

namespace asbf::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

const Shape& Tensor::shape() const { return tape_->shape_of(id_); }
std::size_t Tensor::size() const { return tape_->value_of(id_).size(); }
std::span<const double> Tensor::data() const { return tape_->value_of(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  const auto& v = tape_->value_of(id_);
  if (v.size() != 1) {
    throw ContractError("item() on tensor of shape " + to_string(shape()));
  }
  return v[0];
}

namespace {

void check_shape(const Shape& shape, std::size_t n, const char* what) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError(std::string(what) + ": zero-sized dimension in " + to_string(shape));
  }
  if (numel(shape) != n) {
    throw DimensionError(std::string(what) + ": " + std::to_string(n) +
                         " values for shape " + to_string(shape));
  }
}

}  // namespace

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  check_shape(shape, values.size(), "constant");
  nodes_.push_back(Node{"constant", std::move(shape), std::move(values), {}, {}, {}, false});
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::constant(Shape shape, double fill) {
  std::vector<double> values(numel(shape), fill);
  return constant(std::move(shape), std::move(values));
}

Tensor Tape::parameter(const std::string& name, Shape shape,
                       std::span<const double> values) {
  check_shape(shape, values.size(), "parameter");
  if (params_.count(name)) throw ContractError("parameter registered twice: " + name);
  nodes_.push_back(Node{"parameter", std::move(shape),
                        std::vector<double>(values.begin(), values.end()), {}, {}, {}, true});
  const int id = static_cast<int>(nodes_.size()) - 1;
  params_.emplace(name, id);
  return Tensor(this, id);
}

Tensor Tape::record(const char* kind, Shape shape, std::vector<double> value,
                    std::vector<int> inputs, Backward backward) {
  check_shape(shape, value.size(), kind);
  bool needs = false;
  for (int in : inputs) needs = needs || nodes_[in].requires_grad;
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{kind, std::move(shape), std::move(value), {},
                        std::move(inputs), std::move(backward), needs});
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

double* Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape_ != this) throw ContractError("backward: tensor belongs to another tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        to_string(nodes_[loss.id_].shape));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (!nodes_[loss.id_].requires_grad) return;
  grad_buffer(loss.id_)[0] = 1.0;
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

std::vector<double> Tape::grad(const Tensor& t) const {
  const Node& n = nodes_[t.id_];
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

GradientMap Tape::gradients(const Tensor& loss) {
  backward(loss);
  GradientMap out;
  for (const auto& [name, id] : params_) out.emplace(name, grad(Tensor(this, id)));
  return out;
}

}  // namespace asbf::ad
