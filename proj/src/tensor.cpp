#include "unisoma/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "unisoma/autograd.hpp"

namespace unisoma {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor() : shape_{0}, data_(std::make_shared<const std::vector<double>>()) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (unisoma::numel(shape_) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = unisoma::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape_));
  return shape_[1];
}

std::span<const double> Tensor::data() const { return {data_->data(), data_->size()}; }

std::vector<double> Tensor::to_vector() const { return *data_; }

double Tensor::at(std::size_t row, std::size_t col) const {
  return (*data_)[row * cols() + col];
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

bool Tensor::all_finite() const {
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::detach() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = -1;
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.numel() == 0 || std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------
// Tape

Tensor Gradients::of(const Tensor& t) const {
  if (t.tape() != tape_ && t.tape() != nullptr) {
    throw std::logic_error("gradient requested for a tensor recorded on another tape");
  }
  if (t.node() < 0 || static_cast<std::size_t>(t.node()) >= grads_.size() ||
      grads_[t.node()].empty()) {
    return Tensor::zeros(t.shape());
  }
  return Tensor(shapes_[t.node()], grads_[t.node()]);
}

int Tape::push(Node node) {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::watch(const Tensor& value) {
  Tensor out = value.detach();
  out.tape_ = this;
  out.node_ = push(Node{{}, {}, value.shape()});
  return out;
}

Tensor Tape::record(Tensor out, std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  return record(std::move(out), std::vector<const Tensor*>(inputs), std::move(fn));
}

Tensor Tape::record(Tensor out, const std::vector<const Tensor*>& inputs, BackwardFn fn) {
  if (!out.all_finite()) {
    throw NumericalError("non-finite value produced by forward op, output shape " +
                         shape_str(out.shape()));
  }
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->tape()) continue;
    if (tape && tape != in->tape()) throw std::logic_error("op mixes tensors from two tapes");
    tape = in->tape();
  }
  if (!tape) return out;
  Node node;
  node.shape = out.shape();
  node.fn = std::move(fn);
  node.inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) node.inputs.push_back(in->tape() ? in->node() : -1);
  out.tape_ = tape;
  out.node_ = tape->push(std::move(node));
  return out;
}

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
  if (loss.tape() != this) throw std::logic_error("loss was not recorded on this tape");
  if (loss.numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  }
  consumed_ = true;

  std::vector<std::vector<double>> grads(nodes_.size());
  std::vector<Shape> shapes(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) shapes[i] = nodes_[i].shape;
  grads[loss.node()] = {1.0};

  std::vector<std::vector<double>*> grad_in;
  for (int id = loss.node(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (grads[id].empty() || !node.fn) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const int in = node.inputs[j];
      if (in < 0) continue;
      if (grads[in].empty()) grads[in].assign(numel(nodes_[in].shape), 0.0);
      grad_in[j] = &grads[in];
    }
    node.fn(grads[id], grad_in);
  }
  return Gradients(std::move(grads), std::move(shapes), this);
}

}  // namespace unisoma
